"""munidex: build a validated directory of municipal e-government websites,
store bounded replicas of them, and derive statistics, classifications and maps."""

__version__ = "0.1.0"
