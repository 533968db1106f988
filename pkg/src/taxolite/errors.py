"""Exception hierarchy for taxolite.

Every error raised by the library derives from TaxoliteError so callers can
catch the whole family at once (the CLI maps them to exit code 2).
"""


class TaxoliteError(Exception):
    """Base class for all taxolite errors."""


# --- taxonomy parsing / validation ---------------------------------------

class MalformedInput(TaxoliteError):
    """Input bytes are syntactically or structurally invalid."""


class DuplicateId(TaxoliteError):
    """Two nodes resolved to the same identifier."""


class UnreachableNode(TaxoliteError):
    """A node cannot be reached from the root."""


class CycleDetected(TaxoliteError):
    """A directed cycle was found where the mode forbids one."""


class EmptyTaxonomy(TaxoliteError):
    """The input contains no nodes."""


class UnsupportedMode(TaxoliteError):
    """The operation does not support the taxonomy's mode."""


# --- stats / subtree selection --------------------------------------------

class DegenerateStats(TaxoliteError):
    """Statistics unusable for window computation (no internal nodes)."""


class EmptyEdgeSet(TaxoliteError):
    """Subtree selection needs at least one edge."""


# --- units / prompts -------------------------------------------------------

class MixedKinds(TaxoliteError):
    """Units of different metric kinds were mixed in one batch."""


class EmptyUnits(TaxoliteError):
    """An operation got an empty unit list."""


# --- scoring ----------------------------------------------------------------

class ZeroSize(TaxoliteError):
    """Penalty requested for an undersized slice of size zero."""


class BackendError(TaxoliteError):
    """Base class for completion-backend failures."""


class Transport(BackendError):
    """Network-level failure talking to the backend."""


class Timeout(Transport):
    """The backend did not answer within the configured timeout."""


class AuthMissing(BackendError):
    """No API key found in the configured environment variable."""


class HttpStatus(BackendError):
    """The backend answered with a non-success HTTP status."""

    def __init__(self, code: int, message: str = ""):
        super().__init__(message or f"backend returned HTTP {code}")
        self.code = code


# --- detectors ---------------------------------------------------------------

class EmptyLexicon(TaxoliteError):
    """A lexicon-based detector needs at least one term."""


class NoEdges(TaxoliteError):
    """An edge-based detector got a taxonomy without edges."""


class ZeroBaseline(TaxoliteError):
    """A relation observed in the taxonomy has no positive baseline frequency."""


class NoEligibleParents(TaxoliteError):
    """No parent has enough embeddable children for clustering."""


class DimensionMismatch(TaxoliteError):
    """An embedding provider returned a vector of unexpected length."""


# --- analysis ----------------------------------------------------------------

class LengthMismatch(TaxoliteError):
    """Paired vectors have different lengths."""


class ZeroVariance(TaxoliteError):
    """Correlation undefined: one of the vectors is constant."""


class RaggedMatrix(TaxoliteError):
    """Rating matrix rows do not all have the same rater count."""


class DegenerateAgreement(TaxoliteError):
    """Chance agreement is exactly 1; kappa undefined."""


class EmptyIntersection(TaxoliteError):
    """No unit ids shared between the two score sets."""
