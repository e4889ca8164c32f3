"""Band-decomposed flow matching at desk scale.

Subpackages follow the pipeline: spectral (DFT + band masks), flowpath
(interpolation path and targets), model (two-branch velocity network),
training (dual-domain losses + AdamW), sampling (ODE sampler), analysis
(spectral diagnostics), data (synthetic datasets + PPM I/O), cli.
"""

__version__ = "0.1.0"
