"""Static analysis and workload analytics for Suricata-dialect NIDS rules."""

__version__ = "0.1.0"
