use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub instance_id: String,
    pub instance_type: String,
    pub region: String,
    pub acquired_at: f64,
    pub terminated_at: f64,
    pub duration_seconds: f64,
    /// Currency per hour.
    pub rate: f64,
    pub cost: f64,
}

/// Per-second billing of every terminated instance plus work accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BillingLedger {
    pub entries: Vec<LedgerEntry>,
    pub total: f64,
    pub productive_core_seconds: f64,
    pub wasted_core_seconds: f64,
    /// Share of billed cost attributable to persisted work.
    pub productive_cost: f64,
}

impl BillingLedger {
    pub fn bill(
        &mut self,
        instance_id: &str,
        instance_type: &str,
        region: &str,
        acquired_at: f64,
        terminated_at: f64,
        rate: f64,
    ) -> &LedgerEntry {
        let duration_seconds = terminated_at - acquired_at;
        let cost = duration_seconds * rate / 3600.0;
        self.total += cost;
        self.entries.push(LedgerEntry {
            instance_id: instance_id.to_string(),
            instance_type: instance_type.to_string(),
            region: region.to_string(),
            acquired_at,
            terminated_at,
            duration_seconds,
            rate,
            cost,
        });
        self.entries.last().expect("just pushed")
    }

    pub fn entries_total(&self) -> f64 {
        self.entries.iter().map(|e| e.cost).sum()
    }
}
