"""Label- and author-aligned neural topic models on a Dirichlet VAE core."""

__version__ = "0.1.0"
