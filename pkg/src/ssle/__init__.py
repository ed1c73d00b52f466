"""Self-supervised speech enhancement with a pre-trained clean-speech autoencoder,
learned dereverberation / ratio masks in latent space and a mixture autoencoder
aligned to it."""

__version__ = "0.1.0"
