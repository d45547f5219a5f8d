# Character CNN (25-dim char embeddings, 25 filters of width 3)
CHAR_EMB_DIM = 25
CNN_FILTERS = 25
CNN_KERNEL = 3

# Casing embedding (5 categories + padding row)
CASE_EMB_DIM = 5
NUM_CASE_CATEGORIES = 6

# BiLSTM
LSTM_STATE = 200
FORGET_BIAS = 1.0

# Reserved character indices
CHAR_PAD = 0
CHAR_UNKNOWN = 1

# Training hyperparameters
LEARNING_RATE = 0.001
LR_DECAY = 0.005  # po in lr / (1 + po * epoch)
BATCH_SIZE = 8
MAX_EPOCHS = 15
DROPOUT = 0.5
VALIDATION_SPLIT = 0.2
CLIP_NORM = 5.0

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Random search ranges (lr is sampled log-uniformly)
SEARCH_LSTM_STATES = (200, 250)
SEARCH_DROPOUT = (0.3, 0.7)
SEARCH_BATCH_SIZE = (4, 256)
SEARCH_LEARNING_RATE = (0.0003, 0.01)
SEARCH_EPOCHS = (10, 100)
SEARCH_LR_DECAY = (0.001, 0.01)

# Gradient check
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5
GRADCHECK_SAMPLES = 20
GRADCHECK_ATOL = 1e-9  # central-difference roundoff floor in 64-bit

# Seeding
DEFAULT_SEED = 42
RNG_STREAMS = {
    "init": 1,
    "split": 2,
    "shuffle": 3,
    "dropout": 4,
    "search": 5,
}

# Model file
MODEL_MAGIC = b"NERB"
MODEL_FORMAT_VERSION = 1

# CLI
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
THREADS_ENV = "NER_FORGE_THREADS"
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

# Published GloVe-6B coverage ratios in percent, (train, test)
GLOVE_COVERAGE_REFERENCE = {
    "NCBI-Disease": (96.703, 96.710),
    "BC5CDR": (96.059, 95.795),
    "BC4CHEMD": (96.409, 96.434),
    "Linnaeus": (96.801, 96.867),
    "Species800": (95.909, 96.258),
    "JNLPBA": (92.566, 92.690),
    "AnatEM": (96.992, 96.945),
    "BioNLP13-CG": (97.750, 96.663),
}

# Published test F1 with GloVe-6B embeddings
GLOVE_F1_REFERENCE = {
    "NCBI-Disease": 87.19,
    "BC5CDR": 88.32,
    "BC4CHEMD": 92.32,
    "Linnaeus": 85.51,
    "Species800": 79.22,
    "JNLPBA": 79.78,
    "AnatEM": 87.74,
    "BioNLP13-CG": 84.3,
}
