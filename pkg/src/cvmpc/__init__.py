"""Conservative value-ensemble MPC for non-prehensile tray transport."""

__version__ = "0.1.0"
