# run.py
# 應用程式入口點

import sys
from dotenv import load_dotenv

# 載入環境變數
load_dotenv()

from app import create_app
from app.cli import run

create_app()

if __name__ == '__main__':
    sys.exit(run(sys.argv[1:]))
