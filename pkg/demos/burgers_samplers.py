"""Burgers with uniform, RAD and GLF resampling at a small, matched budget.

All three runs start from the same network and points; they differ only in
how the next collocation set is chosen.  RAD pays for a dense residual
evaluation every round, GLF reuses the residuals it already has.
"""

from glfpinn.config import OptimizerSettings, RunConfig, SamplerSettings
from glfpinn.trainer import run

for name in ("uniform", "rad", "glf"):
    cfg = RunConfig(
        "burgers",
        sampler=SamplerSettings(name=name),
        optimizer=OptimizerSettings(adam_steps=100, lbfgs_steps=100),
        outer_rounds=3,
        seeds=(0,),
        save_points=False,
    )
    seed = run(cfg)["seeds"][0]
    print(f"{name:8s} final L2 {seed['final_l2_error']:.3e}   extra residual evaluations {seed['extra_residual_evals']}")
