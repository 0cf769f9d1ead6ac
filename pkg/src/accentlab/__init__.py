"""accentlab: accent classification and neutralization on MFCC features."""

__version__ = "0.1.0"
