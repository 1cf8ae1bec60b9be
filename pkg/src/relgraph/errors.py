"""Exception hierarchy shared by every layer of the engine."""


class RelGraphError(Exception):
    """Base class for all engine errors."""


class SchemaError(RelGraphError):
    pass


class DuplicateName(SchemaError):
    pass


class UnknownNodeType(SchemaError):
    pass


class UnknownEdgeType(SchemaError):
    pass


class UnknownProperty(SchemaError):
    pass


class KindMismatch(RelGraphError):
    pass


class ModeMismatch(SchemaError):
    pass


class SignatureMismatch(SchemaError):
    pass


class SchemaFrozen(SchemaError):
    pass


class GraphError(RelGraphError):
    pass


class TypeMismatch(GraphError):
    pass


class DuplicateInstanceId(GraphError):
    pass


class GenerationDepthExceeded(GraphError):
    pass


class UnknownInstance(GraphError):
    pass


class OwnerMismatch(GraphError):
    pass


class SensorFailure(GraphError):
    pass


class GraphSealed(GraphError):
    pass


class QueryError(RelGraphError):
    pass


class EmptyAggregate(QueryError):
    pass


class ParseError(RelGraphError):
    """Syntax error in query or constraint text.

    ``pos`` is a character offset into ``text``; ``line``/``column`` are 1-based.
    """

    def __init__(self, message, text="", pos=0, expected=()):
        self.message = message
        self.text = text
        self.pos = pos
        self.expected = tuple(sorted(set(expected)))
        self.line = text.count("\n", 0, pos) + 1
        self.column = pos - (text.rfind("\n", 0, pos) + 1) + 1
        detail = message
        if self.expected:
            detail += " (expected one of: " + ", ".join(self.expected) + ")"
        super().__init__(f"{self.line}:{self.column}: {detail}")


class PlanError(RelGraphError):
    def __init__(self, message, text="", pos=0):
        self.message = message
        self.text = text
        self.pos = pos
        self.line = text.count("\n", 0, pos) + 1
        self.column = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{self.line}:{self.column}: {message}")


class LearningError(RelGraphError):
    pass


class EmptyTrainingSet(LearningError):
    pass


class EmptyTestSet(LearningError):
    pass


class DuplicateParameter(LearningError):
    pass


class EmptyFamily(LearningError):
    pass


class UntrainedClassifier(LearningError):
    pass


class UnboundVariable(RelGraphError):
    pass


class DataError(RelGraphError):
    """Malformed input table or config; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        if column is not None:
            where += f" [{column}]"
        super().__init__(f"{where}: {message}" if where else message)


class RaggedRow(DataError):
    pass


class DuplicateId(DataError):
    pass


class ParseFailure(DataError):
    pass


class ParameterOutOfRange(RelGraphError):
    pass
