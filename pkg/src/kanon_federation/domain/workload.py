from dataclasses import dataclass, field
from typing import Optional

from kanon_federation.domain.anonymization import AnonymizationMap
from kanon_federation.domain.constants import *
from kanon_federation.domain.control_flow import ControlFlowSet


@dataclass
class WorkloadState:
    """(C_system, k_system) workload protection state plus the cached view.

    Attributes:
        c_system: Control flow set the cached view protects
        k_system: Anonymity level the cached view satisfies
        cached_view: View generated for (c_system, k_system), or strengthened by merging
    """
    c_system: ControlFlowSet = field(default_factory=ControlFlowSet)
    k_system: int = DEFAULT_K
    cached_view: Optional[AnonymizationMap] = None


class AdmissionDecision:
    """Base class of the four admission outcomes."""

    @property
    def name(self) -> str:
        return type(self).__name__

    def __eq__(self, other: object) -> bool:
        return type(self) is type(other) and vars(self) == vars(other)

    def __hash__(self) -> int:
        return hash((self.name, tuple(sorted(vars(self).items(), key=str))))

    def __repr__(self) -> str:
        details = ", ".join(f"{k}={v}" for k, v in vars(self).items())
        return f"{self.name}({details})"


class ReuseView(AdmissionDecision):
    """The query runs on the cached view unchanged."""


class MergeClasses(AdmissionDecision):
    """Cached classes are combined until they satisfy k_new."""

    def __init__(self, k_new: int):
        self.k_new = k_new


class AugmentView(AdmissionDecision):
    """A new view is generated for the union of the control flow sets."""

    def __init__(self, c_union: ControlFlowSet):
        self.c_union = c_union


class ObliviousFallback(AdmissionDecision):
    """The query is upgraded to fully oblivious execution."""
