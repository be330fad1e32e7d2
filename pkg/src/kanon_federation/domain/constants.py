# Security policy labels
POLICY_PUBLIC = "public"
POLICY_KANON = "kanon"
POLICIES = (POLICY_PUBLIC, POLICY_KANON)

# Scalar kinds (dates are stored as days since epoch)
KIND_INTEGER = "integer"
KIND_TEXT = "text"
KIND_DATE = "date"
SCALAR_KINDS = (KIND_INTEGER, KIND_TEXT, KIND_DATE)
NUMERIC_KINDS = (KIND_INTEGER, KIND_DATE)

# Execution modes
MODE_PLAIN = "plain"
MODE_ENCRYPTED = "encrypted"
MODE_KANON = "kanon"
MODE_OBLIVIOUS = "oblivious"
MODES = (MODE_PLAIN, MODE_ENCRYPTED, MODE_KANON, MODE_OBLIVIOUS)

# Aggregate functions
AGG_COUNT = "COUNT"
AGG_SUM = "SUM"
AGG_AVG = "AVG"
AGG_MIN = "MIN"
AGG_MAX = "MAX"
AGGREGATE_FUNCTIONS = (AGG_COUNT, AGG_SUM, AGG_AVG, AGG_MIN, AGG_MAX)

# Comparison operators accepted in WHERE conjuncts

# Column suffixes carrying the (SUM, COUNT) pair of an AVG until the client divides
AVG_SUM_SUFFIX = "#sum"
AVG_COUNT_SUFFIX = "#count"

# Synthetic class used by the encrypted and oblivious modes
SYNTHETIC_CLASS_ID = "*"

# View generation strategies
VIEW_STRATEGY_GREEDY = "greedy"
VIEW_STRATEGY_SORTED_SWEEP = "sorted_sweep"
VIEW_STRATEGIES = (VIEW_STRATEGY_GREEDY, VIEW_STRATEGY_SORTED_SWEEP)

# Projections are enumerated explicitly by check_view up to this many control flow attributes
MAX_ENUMERATED_PROJECTION_ATTRS = 3

DEFAULT_SEED = 42
DEFAULT_K = 5

# Data directory layout
CATALOG_FILENAME = "catalog.json"
SHARD_FILENAME_TEMPLATE = "{relation}.host{host}.csv"

# Plan node kinds
NODE_SCAN = "Scan"
NODE_FILTER = "Filter"
NODE_JOIN = "Join"
NODE_AGGREGATE = "Aggregate"
NODE_PROJECT = "Project"
NODE_SORT = "Sort"
NODE_LIMIT = "Limit"
CLIENT_SIDE_NODE_KINDS = (NODE_SORT, NODE_LIMIT)

# Per-node plan modes
PLAN_MODE_PLAIN = "Plain"
PLAN_MODE_SECURE = "Secure"

# Predicate operator for cohort lists
OP_IN = "IN"

# Trace event kinds
EVENT_CLASS_EMIT = "ClassEmit"
EVENT_CLASS_DROP = "ClassDrop"
EVENT_PAIR_EMIT = "PairEmit"
EVENT_BIN_EMIT = "BinEmit"
EVENT_KINDS = (EVENT_CLASS_EMIT, EVENT_CLASS_DROP, EVENT_PAIR_EMIT, EVENT_BIN_EMIT)

# Check-view violation kinds
VIOLATION_SIZE = "size"
VIOLATION_FEDERATED = "federated"
VIOLATION_PROJECTION = "projection"

# Wire protocol
FRAME_HEADER_FORMAT = "!IB"
ENVELOPE_MARKER = 0xE5
MAX_FRAME_BYTES = 256 * 1024 * 1024
DEFAULT_LISTEN_PORT = 7400
SHARD_TIMEOUT_SECONDS = 30.0

# Report columns
REPORT_COLUMNS = ("scenario", "query", "mode", "k", "output_tuples", "comparisons", "wall_millis", "trace_hash", "error")
BREAKDOWN_COLUMNS = ("scenario", "query", "mode", "k", "node", "node_kind", "output_tuples", "comparisons", "transfer_frames")
