"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """Invalid generation or architecture parameter (sparsity, precision, ...)."""


class ShapeError(ValueError):
    """Tensor / kernel shape disagreement."""


class GraphError(ValueError):
    """Malformed dataflow graph (cycle, bad width, unknown node kind)."""


class EmissionError(RuntimeError):
    """Hardware-description emission failed (name collision, unsupported node)."""


class MappingError(RuntimeError):
    """No technology-mapping rule for a node kind."""


class SimulationError(RuntimeError):
    """Stimulus does not match the graph (missing beats, wrong port count)."""
