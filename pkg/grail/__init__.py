# GRAIL package: goal recognition from demonstrations via learned policy banks

__version__ = "0.1.0"
