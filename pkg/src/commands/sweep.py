import os

from src.commands.common import add_experiment_flags, config_from_args
from utils.config import MODELS, MODES
from utils.errors import ConfigError
from utils.ml_pipeline import sweep_fineness


def _int_list(text):
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigError("expected comma-separated integers", value=text)


def _choice_list(text, choices, key):
    values = [part.strip() for part in text.split(',') if part.strip()]
    unknown = [value for value in values if value not in choices]
    if unknown:
        raise ConfigError("unknown value", key=key, values=unknown, choices=list(choices))
    return values


def register(subparsers):
    parser = subparsers.add_parser('sweep', help="discretization fineness sweep (100/1 rounds)")
    add_experiment_flags(parser)
    parser.add_argument('--time-steps', dest='time_steps', required=True,
                        help="comma separated, e.g. 10,20,50")
    parser.add_argument('--models', help="comma separated model names (default: --model)")
    parser.add_argument('--modes', help="comma separated data modes (default: --mode)")
    parser.add_argument('--table', help="CSV path for the plot-ready table")
    return parser


def execute(args):
    m_values = _int_list(args.time_steps)
    args.time_steps = None
    cfg = config_from_args(args)
    models = _choice_list(args.models, MODELS, 'models') if args.models else None
    modes = _choice_list(args.modes, MODES, 'modes') if args.modes else None
    table_path = args.table or os.path.splitext(cfg.out)[0] + "_sweep.csv"
    _, table = sweep_fineness(cfg, m_values, models=models, modes=modes, table_path=table_path)
    print(table.to_string(index=False))
    return 0
