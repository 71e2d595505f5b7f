"""
Camada de domínio do laboratório de dinâmica de GD (edge of stability).
"""

__version__ = "0.3.0"
