import os
import sys

ext_dir = os.environ.get("ETWADC_EXT_DIR")
if ext_dir and ext_dir not in sys.path:
    sys.path.insert(0, ext_dir)
