"""Revenue estimation for cybercrime Bitcoin addresses over a UTXO ledger."""

__version__ = "0.1.0"

from .errors import EstimaError, InvariantError, LedgerError, MethodologyError, MissingRateError
from .ledger import Deposit, Ledger, Transaction, TxSlot, format_btc, load_ledger
from .clustering import (
    ClusterIndex,
    UnionFind,
    build_mi_clusters,
    build_mica_clusters,
    cluster_of,
    detect_coinjoin,
    identify_change_output,
)
from .tags import OwPolicy, TagRecord, TagTable, classify_cluster, load_tags
from .rates import RateTable, convert, load_rates, satoshis_to_cents
from .methodology import SELECTED_METHODOLOGIES, MethodologySpec, parse_methodology
from .estimator import (
    ClusterCache,
    EstimationReport,
    FilterRange,
    SeedSet,
    estimate,
    estimate_groups,
    expand,
    load_ranges,
    load_seeds,
    sweep,
)
from .evasion import classify_withdrawal, evasion_stats
from .deadbolt import conversion_rate, expand_key_release, match_key_release, scan_signature
