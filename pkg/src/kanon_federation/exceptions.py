from typing import Dict, Optional, Type


class FederationException(Exception):
    """ Base class for all kanon_federation exceptions. """
    pass

class ParseError(FederationException):
    """ Exception thrown when a catalog document, data file or query cannot be parsed """
    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position

class ValidationError(FederationException):
    """ Exception thrown when a parsed catalog violates a structural invariant """
    pass

class UnsupportedFeature(FederationException):
    """ Exception thrown when a query uses a construct outside the supported SQL subset """
    pass

class UnknownAttribute(FederationException):
    """ Exception thrown when a plan or histogram references an attribute missing from the catalog """
    pass

class SchemaMismatch(FederationException):
    """ Exception thrown when histograms for different relations or key lists are merged """
    pass

class ViewInfeasible(FederationException):
    """ Exception thrown when no anonymized view can satisfy the federated constraint """
    def __init__(self, message: str, relation: Optional[str] = None, host: Optional[int] = None):
        super().__init__(message)
        self.relation = relation
        self.host = host

class UnmappedValue(FederationException):
    """ Exception thrown when a tuple's control flow values are absent from the anonymization map """
    pass

class DomainMismatch(FederationException):
    """ Exception thrown when join keys do not share a semantic domain """
    pass

class MissingView(FederationException):
    """ Exception thrown when k-anonymous execution is requested without a covering view """
    pass

class QueryTypeError(FederationException, TypeError):
    """ Exception thrown when a predicate or aggregate is applied to an attribute of the wrong kind """
    pass

class TransportError(FederationException):
    """ Exception thrown when a frame cannot be delivered to a host """
    pass

class ProtocolError(FederationException):
    """ Exception thrown when a received frame is malformed """
    pass

class MissingShard(FederationException):
    """ Exception thrown when a result shard for a query never arrives """
    pass

class RemoteError(FederationException):
    """ Exception thrown for an Error frame whose type is not known locally """
    pass

class OracleMismatch(FederationException):
    """ Exception thrown when a benchmark cell's dummy-stripped rows differ from the plain rows """
    pass


def exception_registry() -> Dict[str, Type[FederationException]]:
    """Map exception class names to classes, used to re-raise Error frames."""
    registry: Dict[str, Type[FederationException]] = {}
    pending = [FederationException]
    while pending:
        cls = pending.pop()
        registry[cls.__name__] = cls
        pending.extend(cls.__subclasses__())
    return registry
