"""sketchjoint: sketch-based articulation modeling for CAD meshes."""

__version__ = "0.1.0"
