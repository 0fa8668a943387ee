from utils.data_generator import write_synthetic


def register(subparsers):
    parser = subparsers.add_parser('synth', help="write a synthetic Weibull survival CSV")
    parser.add_argument('--n', type=int, default=1000)
    parser.add_argument('--p', type=int, default=9)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--signal', type=float, default=1.0,
                        help="coefficient scale; 0 gives data without signal")
    parser.add_argument('--censoring', type=float, default=0.3)
    parser.add_argument('--out', default='synthetic.csv')
    return parser


def execute(args):
    dataset = write_synthetic(args.out, args.n, args.p, args.seed,
                              signal=args.signal, censoring_rate=args.censoring)
    print(f"Wrote {args.out}: {dataset.summary()}")
    return 0
