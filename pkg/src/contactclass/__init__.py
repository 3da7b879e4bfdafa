"""Contact classification statistics for proximity tracing.

Closed-form missed-detection and false-alarm models for Bluetooth RSSI and
audio ranging, decision-accumulation statistics, a two-way ranging protocol
simulator, a baseband delay-estimation experiment and a Monte Carlo oracle.
"""

__version__ = "0.1.0"
