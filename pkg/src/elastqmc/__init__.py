"""Random-coefficient nearly incompressible elasticity: nonconforming FEM + interlaced QMC."""

__version__ = "0.1.0"
