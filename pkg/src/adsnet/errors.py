"""Exception types mapped onto CLI exit codes."""


class ADSNetError(Exception):
    exit_code = 1


class ConfigError(ADSNetError, ValueError):
    exit_code = 2


class DataError(ADSNetError):
    exit_code = 3


class NumericError(ADSNetError, FloatingPointError):
    exit_code = 4
