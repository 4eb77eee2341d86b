"""
When are the specific loadings identified?
==========================================

The specific covariance of a unit is ``Gamma diag(psi) Gamma^T``. If the
columns of ``Gamma`` are linearly independent in the space of symmetric
matrices, the pattern ``psi`` can be read off the covariance. A column
that is active for every unit, however, cannot be told apart from a
shared factor.
"""

import numpy as np

from apafa import (check_nrspc, check_rank_condition, truncation_bound,
                   verify_switch_resistance)
from apafa.model import assemble_marginal_covariance

rng = np.random.default_rng(0)
p, k = 6, 3
Gamma = rng.standard_normal((p, k))
print("largest number of specific columns for p=6:", truncation_bound(p))
print("rank condition holds:", check_rank_condition(Gamma).holds)

# patterns of three studies, all columns distinct
Psi_star = np.array([[1, 0, 0], [0, 1, 1], [0, 0, 1]], dtype=float)
print("distinct column supports:", check_nrspc(Psi_star).holds)

res = verify_switch_resistance(Gamma, Psi_star)
print("patterns recovered from covariances:", res.unique)
print(np.round(res.solution, 6))

# two equal columns: moving a unit between them changes nothing
G2 = np.column_stack([Gamma[:, 0], Gamma[:, 0]])
print("duplicated column, rank condition:", check_rank_condition(G2).holds)

# an always-on specific column is a shared factor in disguise
Lambda, g = rng.standard_normal((p, 2)), rng.standard_normal((p, 1))
sigma2 = np.ones(p)
as_specific = assemble_marginal_covariance(Lambda, g, np.ones(1), sigma2)
as_shared = assemble_marginal_covariance(np.hstack([Lambda, g]), g, np.zeros(1), sigma2)
print("always-on column equals a shared one:", np.allclose(as_specific, as_shared))
