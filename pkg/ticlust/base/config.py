"""Default settings for the numerical modules."""

# ADMM solver for the Toeplitz graphical lasso
ADMM_CONFIG = {
    'rho': 1.0,
    'tol_abs': 1e-6,
    'tol_rel': 1e-5,
    'max_iter': 1000,
    # S + eps * trace(S)/d * I when the smallest eigenvalue of S falls below min_eig
    'cov_min_eig': 1e-8,
    'cov_ridge': 1e-6,
}

# EM driver
EM_CONFIG = {
    'k': 2,
    'beta': 1.0,
    'lambda': 0.1,
    'window': 1,
    'max_iter': 100,
    'seed': 0,
    'num_workers': 1,
    # Times a cluster may be reseeded before it is allowed to stay empty
    'max_reseeds': 3,
}

# Post-processing chain (mean subtraction is always applied)
PREPROCESS_CONFIG = {
    'pca_dims': None,
    'length_norm_cluster': False,
    'length_norm_baseline': True,
    # Duration assigned to each row when no times sidecar is given
    'unit_duration': 1.0,
}

# Cosine K-means baseline
KMEANS_CONFIG = {
    'max_iter': 300,
}

# Synthetic benchmark generator
SYNTH_CONFIG = {
    'k': 3,
    'n': 8,
    'w': 1,
    't_len': 300,
    'stay_prob': 0.95,
    'sparsity': 0.8,
    'separation': 4.0,
    'seed': 7,
}

# RTTM timelines are written with this many decimals
RTTM_DECIMALS = 2

# Logging Configuration
LOGGING_CONFIG = {
    'level': 'INFO',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
}
