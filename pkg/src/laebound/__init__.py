"""PAC-Bayes generalization bounds for linear autoencoders and multivariate linear regression."""

__version__ = "0.1.0"
