"""Control-volume solvers and homogenisation for time-fractional diffusion in binary media."""

__version__ = "0.1.0"
