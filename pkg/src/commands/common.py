from utils.config import MODELS, MODES, load_config

# argparse dest -> ExperimentConfig field
CONFIG_FLAGS = (
    'dataset', 'time_col', 'event_col', 'model', 'mode', 'centres', 'global_rounds',
    'local_rounds', 'rounds', 'time_steps', 'folds', 'lr', 'lr_grid', 'batch_size', 'seed',
    'optimizer', 'hidden_sizes', 'brier_points', 'n_jobs', 'save_models', 'out'
)


def add_experiment_flags(parser):
    """Flags shared by 'run' and 'sweep'; every flag is also a config-file key"""
    parser.add_argument('--config', help="flat key-value config file (JSON or key = value)")
    parser.add_argument('--dataset', help="CSV with one header row")
    parser.add_argument('--time-col', dest='time_col')
    parser.add_argument('--event-col', dest='event_col')
    parser.add_argument('--model', choices=MODELS)
    parser.add_argument('--mode', choices=MODES)
    parser.add_argument('--centres', type=int)
    parser.add_argument('--global-rounds', dest='global_rounds', type=int)
    parser.add_argument('--local-rounds', dest='local_rounds', type=int)
    parser.add_argument('--rounds', help="round preset: 100/1, 20/5 or 1/100")
    parser.add_argument('--folds', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--lr-grid', dest='lr_grid', action='store_true', default=None)
    parser.add_argument('--batch-size', dest='batch_size', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--optimizer', choices=('adam', 'sgd'))
    parser.add_argument('--hidden-sizes', dest='hidden_sizes', help="comma separated, e.g. 32,32")
    parser.add_argument('--brier-points', dest='brier_points', type=int)
    parser.add_argument('--n-jobs', dest='n_jobs', type=int)
    parser.add_argument('--save-models', dest='save_models', action='store_true', default=None)
    parser.add_argument('--out')


def config_from_args(args):
    overrides = {name: getattr(args, name, None) for name in CONFIG_FLAGS}
    return load_config(args.config, overrides)
