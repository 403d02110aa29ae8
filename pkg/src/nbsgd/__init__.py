"""Non-blocking mini-batch parallel SGD: simulator, runtime analytics and harness."""

__version__ = "0.1.0"
