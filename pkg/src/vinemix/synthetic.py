"""A declared three-variable, two-component vine mixture for demos and tests."""

import numpy as np

from .marginals import MarginalModel
from .mixture import MixtureModel
from .paircop import PairCopula
from .vine import Edge, RVineStructure, VineCopula, VineDistribution

EXAMPLE_SIZES = (920, 1044)
EXAMPLE_NAMES = ("drive_retail", "PT_GP", "PT_retail")


def example_components():
    """Component distributions; every pair copula has Kendall's tau of at least 0.4."""
    e01, e12, e02_1 = Edge(0, 1), Edge(1, 2), Edge(0, 2, frozenset({1}))
    first = VineCopula(RVineStructure(3, [[e01, e12], [e02_1]]), {
        e01: PairCopula("gumbel", 0, 2.0),        # tau 0.50
        e12: PairCopula("clayton", 0, 3.0),       # tau 0.60
        e02_1: PairCopula("frank", 0, 4.16),      # tau 0.40
    })
    e02, e12b, e01_2 = Edge(0, 2), Edge(1, 2), Edge(0, 1, frozenset({2}))
    second = VineCopula(RVineStructure(3, [[e02, e12b], [e01_2]]), {
        e02: PairCopula("gaussian", 0, 0.7071),   # tau 0.50
        e12b: PairCopula("joe", 0, 2.4),          # tau 0.43
        e01_2: PairCopula("student_t", 0, 0.5878, 6.0),  # tau 0.40
    })
    g1 = VineDistribution(first, [
        MarginalModel("loglogistic", [6.47, 0.16]),
        MarginalModel("gamma", [5.56, 0.49]),
        MarginalModel("skew_student_t", [17.46, 4.27, 4.60, 1.85]),
    ])
    g2 = VineDistribution(second, [
        MarginalModel("skew_normal", [3.26, 1.02, 1.15]),
        MarginalModel("gamma", [6.22, 0.77]),
        MarginalModel("normal", [9.12, 2.60]),
    ])
    return g1, g2


def example_model():
    sizes = np.asarray(EXAMPLE_SIZES, dtype=float)
    return MixtureModel(sizes / sizes.sum(), list(example_components()))


def simulate_example(sizes=EXAMPLE_SIZES, seed=0):
    """Simulate exactly ``sizes[k]`` rows from component ``k``.

    Returns ``(x, labels)`` with rows ordered by component.
    """
    from ._utils import derive_seed

    comps = example_components()
    parts, labels = [], []
    for k, (comp, n) in enumerate(zip(comps, sizes)):
        parts.append(comp.simulate(int(n), derive_seed(seed, f"component:{k}")))
        labels.append(np.full(int(n), k))
    return np.vstack(parts), np.concatenate(labels)
