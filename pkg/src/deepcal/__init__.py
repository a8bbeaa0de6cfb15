"""Neural-network surrogates for calibrating GARCH option pricing models.

Modules
-------
cts          standard classical tempered stable innovations
quasirandom  Halton sampling of the parameter box
garch_mcs    Duan and CTS-GARCH Monte Carlo pricing
dataset      training sets of log relative prices
fnn          feedforward surrogate with Levenberg-Marquardt training
calibration  option chains, OTM pricing and rel-RMSE calibration
greeks       finite-difference Greeks
cli          ``deepcal`` command line
"""
__version__ = "0.1.0"
