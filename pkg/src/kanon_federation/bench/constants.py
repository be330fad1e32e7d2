# Generator vocabularies
MARKET_SEGMENTS = ("AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY")
NATIONS = 25
# 1992-01-01 .. 1998-12-31 as days since epoch
ORDER_DATE_RANGE = (8035, 10591)
LINES_PER_ORDER = (1, 7)

DIAGNOSES = ("cdiff", "hd", "internal bleeding", "flu", "infection", "diabetes", "hypertension", "cold")
MEDICATIONS = ("aspirin", "warfarin", "heparin", "metformin", "statin")
COHORTS = ("cdiff", "hd", "aspirin")
SEXES = ("F", "M")
BIRTH_YEAR_RANGE = (1930, 2005)
RECORDS_PER_PATIENT = 3

# Desk-scale row counts per unit of scale
ORDERS_PER_SCALE = 15000
CUSTOMERS_PER_SCALE = 1500
SUPPLIERS_PER_SCALE = 1000

GENERATOR_TPCH = "tpch"
GENERATOR_HEALTH = "health"
GENERATOR_UNIFORM_JOIN = "uniform_join"
GENERATOR_RUNNING_EXAMPLE = "running_example"

# Breakdown row carrying a cell's ClassTransfer frames
TRANSFER_BREAKDOWN_NODE = -1
TRANSFER_BREAKDOWN_KIND = "Transfer"

REPORT_FILENAME_TEMPLATE = "{scenario}.csv"
BREAKDOWN_FILENAME_TEMPLATE = "{scenario}.breakdown.csv"
TRACE_DIRNAME_TEMPLATE = "{scenario}.traces"
TRACE_FILENAME_TEMPLATE = "{query}.{mode}.k{k}.jsonl"
