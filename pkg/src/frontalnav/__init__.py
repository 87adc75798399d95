"""Zero-shot frontal-view language navigation with textual spatial cues."""

__version__ = "0.1.0"
