"""Drive-strength gate sizing: NLDM cell libraries, STA/power evaluation and NSGA-II search."""

__version__ = "0.1.0"
