"""Three-stage 3D hand-mesh reconstruction: joints -> rough mesh -> refined mesh.

Submodules:
    geometry    camera projection, bilinear sampling, mesh quantities
    hand_model  parametric hand template, skinning, sample synthesis
    dataset     on-disk dataset layout and loading
    renderer    hard z-buffer and differentiable soft rasterizers
    network     the three-stage model
    losses      the six supervision terms and their weighted sum
    metrics     mesh/pose accuracy and mesh-image alignment metrics
    pipeline    training, evaluation, ablation, inference
"""

__version__ = "0.1.0"
