"""
Aplicação principal do laboratório de edge of stability.
Uso: python app.py <single-neuron|mean-model|relu|experiment> ...
"""
import sys

from presentation.cli import main

if __name__ == "__main__":
    sys.exit(main())
