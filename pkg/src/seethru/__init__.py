"""Simulated cross-LiDAR see-through AR pipeline.

A mapping robot and a first-person (FPV) device share a synthetic indoor
world. The robot builds a global map; the FPV device is anchored into that
map by NDT-coarse + trimmed point-to-plane ICP registration; detected humans
are extracted from robot scans and projected, occlusion-aware, into the FPV
view. The package also carries a two-node latency/clock harness, a scenario
engine with quantitative inlier/latency reports, a FastAPI service and a
thin CLI client.
"""

__version__ = "0.1.0"
