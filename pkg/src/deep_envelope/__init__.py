"""DeepEnvelope - subject-enveloped deep sample learning for multi-segment speech data."""

__version__ = "0.1.0"
