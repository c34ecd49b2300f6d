"""fhlab: multi-time Fisher-Hartwig laboratory for the Hermitian OU process."""

__version__ = "0.1.0"
