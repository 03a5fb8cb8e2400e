// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use tapsweep::campaign::{Execution, RecordFilter, RecordStore};
use tapsweep::diagnosis::{empirical_cdf, reconstruct_profile, BerProfile, Cdf};
use tapsweep::fabric::{DmeId, TapId};
use tapsweep::pipeline::{analyze, build_world, run_campaign, World};
use tapsweep::report::Report;
use tapsweep::scenario::parse_scenario;

pub struct Sim {
    pub world: World,
    pub store: RecordStore,
    pub report: Report,
}

pub fn simulate(text: &str) -> Sim {
    let scenario = parse_scenario(text).expect("scenario parses");
    let world = build_world(&scenario).expect("world builds");
    let store = run_campaign(&world, Execution::Concurrent).expect("campaign runs");
    let report = analyze(&world, &store).expect("analysis runs");
    Sim { world, store, report }
}

impl Sim {
    pub fn profile(&self, config: u32, dme: DmeId, tap: TapId) -> BerProfile {
        let recs = self.store.query(&RecordFilter {
            config_state_id: Some(config),
            dme_id: Some(dme),
            dt_id: Some(tap),
            ..Default::default()
        });
        reconstruct_profile(&recs, None, self.world.axis()).expect("profile")
    }

    pub fn cdf(&self, config: u32, dme: DmeId, tap: TapId) -> Cdf {
        empirical_cdf(&self.profile(config, dme, tap))
    }
}
