"""Exception hierarchy. The CLI maps each category to its own exit code."""


class DvsConvError(Exception):
    exit_code = 1


class ParseError(DvsConvError):
    exit_code = 3


class MalformedAddressError(ParseError):
    def __init__(self, word, offset=None):
        self.word = int(word)
        self.offset = offset
        where = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"malformed DVS address 0x{self.word:08x}{where}")


class ConfigError(DvsConvError):
    exit_code = 4


class NumericError(DvsConvError):
    exit_code = 5


class LabelingError(DvsConvError):
    exit_code = 6
