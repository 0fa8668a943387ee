import logging

from src.commands.common import add_experiment_flags, config_from_args
from utils.ml_pipeline import run_experiment

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser('run', help="cross-validated pooled or federated experiment")
    add_experiment_flags(parser)
    parser.add_argument('--time-steps', dest='time_steps', type=int)
    return parser


def execute(args):
    cfg = config_from_args(args)
    report = run_experiment(cfg)
    rebased = report.summary['rebased']
    print(f"{cfg.model} / {cfg.mode}: c-index {rebased['c_index_mean']} +- {rebased['c_index_std']}, "
          f"integrated Brier {rebased['ibs_mean']} +- {rebased['ibs_std']}")
    return 0
