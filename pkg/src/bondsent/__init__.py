"""Bond sentiment pipeline: text-level polarity scoring, industry propagation,
wavelet duration smoothing, and credit-spread forecast backtesting."""

__version__ = "0.1.0"
