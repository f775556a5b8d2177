"""Balanced On/Off center-surround kernels and a 3D volumetric toolchain.

Import submodules explicitly (`oocs3d.kernels`, `oocs3d.tensor`, ...).
This top-level module deliberately imports nothing heavy: the CLI must
be able to pin BLAS thread counts via environment variables before numpy
loads, so numpy-importing work only happens in the submodules.
"""

__version__ = "0.1.0"
