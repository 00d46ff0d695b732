"""Channel fidelity metrics and non-generative augmentation baselines."""

from .augment import awgn_augment, mixup, mixup_pair
from .distances import bin_powers, kolmogorov_sf, ks_2samp, ks_test_pca, principal_axis, w2_1d, w2_power_spectrum
from .report import MetricReport, compare, write_profile_csv
from .spectra import bin_power, entropy, pas, pdp
