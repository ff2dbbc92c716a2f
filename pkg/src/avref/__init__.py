"""avref: audio-visual grounding of referring expressions on a simulated desk."""

__version__ = "0.1.0"
