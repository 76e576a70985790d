from govkernel.soc.clustering import Cluster, OnlineClusterer, cluster_alerts
from govkernel.soc.scoring import (
    Bands, RiskInputs, RiskWeights, above_threshold, normalized, ranking, risk_exact, risk_score,
)

__all__ = [
    "Bands", "Cluster", "OnlineClusterer", "RiskInputs", "RiskWeights", "above_threshold",
    "cluster_alerts", "normalized", "ranking", "risk_exact", "risk_score",
]
