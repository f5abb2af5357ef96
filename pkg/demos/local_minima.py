"""High rotation noise: random-init LM often stops above the SBSOS cost."""

import numpy as np

from sbsos_slam.bench import trial_seeds
from sbsos_slam.datasets import NoiseSpec, synthesize
from sbsos_slam.lm import lm_solve, random_init
from sbsos_slam.pipeline import solve_graph, translational_rmse

graph, truth = synthesize("manhattan", n=100, w=0, noise=NoiseSpec(kappa_rot=5.0, seed=1003))
result = solve_graph(graph)
print(f"sbsos cost {result.cost:.4f} ({result.certificate.verdict}), "
      f"RMSE {translational_rmse(result.estimate, truth):.3f}, {result.timings['total']:.1f}s")
for k, seed in enumerate(trial_seeds(0, 10)):
    lm = lm_solve(graph, random_init(graph, seed))
    ratio = lm.cost / result.cost
    print(f"  LM init {k}: cost {lm.cost:9.4f}  ratio {ratio:6.3f}{'  trapped' if ratio > 1.1 else ''}  "
          f"RMSE {translational_rmse(lm.assignment, truth):.3f}")
