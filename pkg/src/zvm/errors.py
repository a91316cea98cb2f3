"""Exception hierarchy shared by every VM subsystem."""


class VMError(Exception):
    """Base class for everything the VM can signal to the host."""


class VMFault(VMError):
    """Runtime integrity violation: bad field index, apply to non-closure, etc."""


class StackOverflow(VMError):
    pass


class StepBudgetExceeded(VMError):
    pass


class OutOfMemory(VMError):
    pass


class VmRaise(VMError):
    """Internal control flow: a primitive raised a VM-level exception value."""

    def __init__(self, value):
        super().__init__("vm exception")
        self.value = value


class UncaughtException(VMError):
    def __init__(self, value):
        super().__init__("uncaught vm exception")
        self.value = value


# --- bytecode format errors ---

class BadOpcode(VMError):
    pass


class OperandOverflow(VMError):
    pass


class BadMagic(VMError):
    pass


class BadVersion(VMError):
    pass


class Corrupt(VMError):
    pass


# --- assembler / lambda front end ---

class AsmError(VMError):
    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class SyntaxError_(AsmError):
    pass


class UndefinedLabel(AsmError):
    pass


class DuplicateLabel(AsmError):
    pass


class UnboundVariable(VMError):
    pass


class TooManyArguments(VMError):
    pass


# --- engines ---

class AlreadyThreaded(VMError):
    pass


class ArenaExhausted(VMError):
    pass


class UnsupportedHost(VMError):
    pass


class UnknownPrimitive(VMError):
    pass


class UnresolvedPatch(VMError):
    pass
