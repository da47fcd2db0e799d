"""Population mean curvature, torsion and shape from Frenet-Serret frames."""

__version__ = "0.1.0"
