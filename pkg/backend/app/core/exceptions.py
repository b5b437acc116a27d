"""
Hierarquia de erros do simulador e códigos de saída da CLI.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


class DntError(Exception):
    exit_code = 1


class ConfigError(DntError):
    exit_code = EXIT_CONFIG


class DivergenceError(DntError):
    exit_code = EXIT_DIVERGENCE


class DimensionMismatchError(DntError, ValueError):
    pass


class NonFiniteGradientError(DntError, ValueError):
    pass


class EmptySequenceError(DntError, ValueError):
    pass
