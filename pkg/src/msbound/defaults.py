"""Default run settings, in one place.

=====================  ==========  ==========================================
name                   value       meaning
=====================  ==========  ==========================================
HORIZON_PER_KAPPA      2000        horizon = 2000 * kappa when not given
TRAJECTORIES           2000        Monte Carlo sample size M
BURN_IN                0.5         plateau windows: [H/4, H/2) vs [3H/4, H]
PLATEAU_HEADROOM       1.10        allowed growth of the tail max
PROBE_MULTIPLES        2, 10, 100  default drift probes at k * J
DRIFT_SAMPLES          10000       samples per probe
MIN_DRIFT_SAMPLES      1000        fewer samples triggers a warning
SE_BAND                3.0         pass band in standard errors
CHUNK_SIZE             250         trajectories advanced together
THREADS_ENV            MSB_THREADS caps the worker count
=====================  ==========  ==========================================
"""

HORIZON_PER_KAPPA = 2000
TRAJECTORIES = 2000
BURN_IN = 0.5
PLATEAU_HEADROOM = 1.10
PROBE_MULTIPLES = (2, 10, 100)
DRIFT_SAMPLES = 10_000
MIN_DRIFT_SAMPLES = 1000
SE_BAND = 3.0
CHUNK_SIZE = 250
THREADS_ENV = "MSB_THREADS"
