import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Simulation defaults
DEFAULT_SEED = int(os.getenv('EHSIM_SEED', '20240601'))
DEFAULT_SLOTS = int(os.getenv('EHSIM_SLOTS', '1000000'))
DEFAULT_REPS = int(os.getenv('EHSIM_REPS', '20'))
# 0 means one worker process per CPU
DEFAULT_WORKERS = int(os.getenv('EHSIM_WORKERS', '0'))
WARMUP_FRACTION = float(os.getenv('EHSIM_WARMUP_FRACTION', '0.01'))

# File Paths
OUTPUT_DIR = os.getenv('EHSIM_OUTPUT_DIR', 'outputs')
LOG_FILE_PATH = os.getenv('EHSIM_LOG_FILE_PATH', 'logs/ehsim.log')
LOG_LEVEL = os.getenv('EHSIM_LOG_LEVEL', 'INFO')

# Create necessary directories
os.makedirs(OUTPUT_DIR, exist_ok=True)
os.makedirs(os.path.dirname(LOG_FILE_PATH) or '.', exist_ok=True)
