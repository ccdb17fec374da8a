"""foasim: geometry- and material-aware first-order ambisonics engine.

Subsystems:

* :mod:`foasim.foa` — FOA encode/rotate/decode and DOA estimation
* :mod:`foasim.scene` — scene manifests, materials, depth back-projection
* :mod:`foasim.acoustics` — occlusion, image sources, T60, IR synthesis,
  reference rendering, conditioning descriptors
* :mod:`foasim.diffusion` — latent codec and the conditional DDPM generator
* :mod:`foasim.metrics` — the objective evaluation suite
* :mod:`foasim.dataset` — synthetic corpus generation
* :mod:`foasim.service` — head-tracked streaming session server
* :mod:`foasim.cli` — command-line entry point
"""

__version__ = "0.1.0"
