"""Tamper injection, detection, and attack-difficulty scoring for 3D printing.

The package covers the file formats an attacker in a desktop-FDM workflow can
touch (STL design files, Marlin-flavor G-code toolpaths), the manipulations
worth studying (voids, reorientation, extrusion/feedrate/temperature tampering,
layer delays), the detectors that catch them, and a difficulty-scoring model
for ranking attack vectors.
"""

__version__ = "0.1.0"
