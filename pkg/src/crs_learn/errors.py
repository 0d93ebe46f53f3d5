"""Exception hierarchy shared by every stage of the pipeline."""


class CrsLearnError(Exception):
    """Base class for all errors raised by this package."""


class RuleParseError(CrsLearnError, ValueError):
    """A SecRule directive could not be turned into a rule."""

    def __init__(self, message, rule_id=None, line=None):
        self.rule_id = rule_id
        self.line = line
        where = []
        if rule_id is not None:
            where.append(f"rule {rule_id}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class UnsupportedTransformationError(CrsLearnError, ValueError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unsupported transformation: {name!r}")


class InconsistentSpaceError(CrsLearnError, ValueError):
    """Features, models or scorers were bound to different feature spaces."""


class DegenerateSpaceError(CrsLearnError, ValueError):
    """No rule fired on the training payloads, so the feature space is empty."""


class DegenerateLabelsError(CrsLearnError, ValueError):
    """Only one class is present where two are required."""


class InsufficientSamplesError(CrsLearnError, ValueError):
    def __init__(self, label, available, requested):
        self.label = label
        self.available = available
        self.requested = requested
        super().__init__(
            f"class {label} has {available} samples, {requested} requested"
        )


class MalformedRecordError(CrsLearnError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
