class ConfigurationError(Exception):
    """Bad or unknown configuration; CLI exit code 2."""


class MissingArtifactError(FileNotFoundError):
    """An upstream artifact a command needs does not exist; CLI exit code 3."""


class MetricUndefinedError(ValueError):
    """AUROC cannot be defined (e.g. only one class present); CLI exit code 4."""


class ParseError(ValueError):
    def __init__(self, path, line_no, msg):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.path = path
        self.line_no = line_no
