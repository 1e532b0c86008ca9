"""Physics-informed neural networks with residual-adaptive collocation sampling.

Modules: ``autodiff`` (Taylor jets + reverse sweep), ``network`` (tanh MLP),
``pde`` (benchmark problems), ``sampler`` (GLF, GLF-D, GLF-M, RAD, uniform),
``optim`` (Adam, L-BFGS), ``trainer`` (train/resample loop), ``reference``
(oracle solutions) and ``cli``.
"""

__version__ = "0.1.0"
