use std::ffi::{CStr, CString};
use std::ptr;

use fedmoe_ffi::*;

const TINY: &str = r#"
seed = 5
num_rounds = 3
clients_per_round = 4

[data]
num_clients = 4
num_experts = 2
num_tasks = 2
input_dim = 4
samples_per_client = 40
test_samples = 50

[warm_start]
samples = 16
"#;

fn last_error() -> String {
    let p = fedmoe_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn scores(clients: usize, experts: usize) -> *mut FedmoeScores {
    let mut s = ptr::null_mut();
    let st = unsafe { fedmoe_scores_new(clients, experts, 0.3, 0.05, 0.9, &mut s) };
    assert_eq!(st, FedmoeStatus::Ok);
    s
}

fn fitness(s: *const FedmoeScores, c: usize, e: usize) -> f64 {
    let mut v = f64::NAN;
    assert_eq!(unsafe { fedmoe_scores_fitness(s, c, e, &mut v) }, FedmoeStatus::Ok);
    v
}

fn capacity(memory: f64) -> FedmoeCapacity {
    FedmoeCapacity {
        compute_rate: 1e4,
        memory_budget: memory,
        bandwidth_down: 1e6,
        bandwidth_up: 1e5,
        latency: 0.01,
    }
}

const SPEC: FedmoeExpertSpec = FedmoeExpertSpec {
    memory_cost: 1.0,
    param_bytes: 1000,
    compute_cost: 1.0,
};

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(fedmoe_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn fitness_update_follows_ema() {
    let s = scores(2, 3);
    assert_eq!(fitness(s, 1, 2), 0.5);
    let obs = [FedmoeReward {
        client_id: 1,
        expert_id: 2,
        reward: 1.0,
        sample_contribution: 10,
    }];
    assert_eq!(unsafe { fedmoe_scores_update_fitness(s, obs.as_ptr(), 1) }, FedmoeStatus::Ok);
    // 0.7 * 0.5 + 0.3 * 1.0
    assert!((fitness(s, 1, 2) - 0.65).abs() < 1e-12);
    // unobserved pairs decay toward 0.5, where they already are
    assert_eq!(fitness(s, 0, 0), 0.5);
    unsafe { fedmoe_scores_free(s) };
}

#[test]
fn usage_update_and_desirability() {
    let s = scores(1, 2);
    let contrib = [10.0, 0.0];
    assert_eq!(unsafe { fedmoe_scores_update_usage(s, contrib.as_ptr(), 2) }, FedmoeStatus::Ok);
    let mut u = 0.0;
    assert_eq!(unsafe { fedmoe_scores_usage(s, 0, &mut u) }, FedmoeStatus::Ok);
    // 0.9 * 0 + 0.1 * 10
    assert!((u - 1.0).abs() < 1e-12);
    let mut d = 0.0;
    assert_eq!(unsafe { fedmoe_scores_desirability(s, 0, 0, 1.0, 1.0, &mut d) }, FedmoeStatus::Ok);
    // max usage is 1 so normalized usage is 1
    assert!((d - (0.5 - 1.0)).abs() < 1e-12);
    unsafe { fedmoe_scores_free(s) };
}

#[test]
fn bad_update_leaves_state_alone() {
    let s = scores(2, 2);
    let obs = [
        FedmoeReward {
            client_id: 0,
            expert_id: 0,
            reward: 1.0,
            sample_contribution: 1,
        },
        FedmoeReward {
            client_id: 0,
            expert_id: 9,
            reward: 1.0,
            sample_contribution: 1,
        },
    ];
    let st = unsafe { fedmoe_scores_update_fitness(s, obs.as_ptr(), 2) };
    assert_ne!(st, FedmoeStatus::Ok);
    assert!(last_error().contains('9'));
    assert_eq!(fitness(s, 0, 0), 0.5);
    unsafe { fedmoe_scores_free(s) };
}

#[test]
fn null_and_range_errors() {
    let mut v = 0.0;
    assert_eq!(unsafe { fedmoe_scores_fitness(ptr::null(), 0, 0, &mut v) }, FedmoeStatus::NullPointer);
    assert!(last_error().contains("scores"));
    let s = scores(2, 2);
    assert_eq!(unsafe { fedmoe_scores_fitness(s, 2, 0, &mut v) }, FedmoeStatus::Index);
    assert_eq!(unsafe { fedmoe_scores_fitness(s, 0, 0, ptr::null_mut()) }, FedmoeStatus::NullPointer);
    // success clears the error
    assert_eq!(unsafe { fedmoe_scores_fitness(s, 0, 0, &mut v) }, FedmoeStatus::Ok);
    assert!(fedmoe_last_error().is_null());
    unsafe {
        fedmoe_scores_free(s);
        fedmoe_scores_free(ptr::null_mut());
        fedmoe_plan_free(ptr::null_mut());
        fedmoe_simulation_free(ptr::null_mut());
    }
}

#[test]
fn assignment_respects_capacity_and_covers() {
    let s = scores(3, 4);
    // desirability ties everywhere; usage all zero
    let profiles = [capacity(1.0), capacity(2.0), capacity(5.0)];
    let participants = [0usize, 1, 2];
    let mut plan = ptr::null_mut();
    let st = unsafe {
        fedmoe_assign_round(
            s,
            profiles.as_ptr(),
            3,
            &SPEC,
            3,
            participants.as_ptr(),
            3,
            FedmoeStrategy::LoadBalanced,
            1.0,
            1.0,
            0,
            true,
            &mut plan,
        )
    };
    assert_eq!(st, FedmoeStatus::Ok, "{}", last_error());
    let mut n = 0;
    assert_eq!(unsafe { fedmoe_plan_num_clients(plan, &mut n) }, FedmoeStatus::Ok);
    assert_eq!(n, 3);
    let mut seen = [false; 4];
    for pos in 0..n {
        let (mut client, mut limit, mut count) = (0, 0, 0);
        assert_eq!(
            unsafe { fedmoe_plan_client(plan, pos, &mut client, &mut limit, &mut count) },
            FedmoeStatus::Ok
        );
        assert_eq!(client, pos);
        // min(floor(memory / 1), 3)
        assert_eq!(limit, [1, 2, 3][pos]);
        assert_eq!(count, limit);
        let mut buf = [usize::MAX; 8];
        let mut len = 0;
        assert_eq!(
            unsafe { fedmoe_plan_experts(plan, client, buf.as_mut_ptr(), buf.len(), &mut len) },
            FedmoeStatus::Ok
        );
        assert_eq!(len, count);
        assert!(buf[..len].windows(2).all(|w| w[0] < w[1]));
        for &e in &buf[..len] {
            seen[e] = true;
        }
    }
    // six slots, four experts: every expert is held by someone
    assert!(seen.iter().all(|&x| x));

    let mut len = 0;
    let st = unsafe { fedmoe_plan_experts(plan, 7, ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, FedmoeStatus::Index);
    unsafe {
        fedmoe_plan_free(plan);
        fedmoe_scores_free(s);
    }
}

#[test]
fn truncated_expert_copy_reports_full_length() {
    let s = scores(1, 3);
    let profiles = [capacity(3.0)];
    let mut plan = ptr::null_mut();
    let st = unsafe {
        fedmoe_assign_round(
            s,
            profiles.as_ptr(),
            1,
            &SPEC,
            3,
            [0usize].as_ptr(),
            1,
            FedmoeStrategy::Greedy,
            1.0,
            0.0,
            0,
            false,
            &mut plan,
        )
    };
    assert_eq!(st, FedmoeStatus::Ok);
    let mut buf = [99usize; 1];
    let mut len = 0;
    assert_eq!(unsafe { fedmoe_plan_experts(plan, 0, buf.as_mut_ptr(), 1, &mut len) }, FedmoeStatus::Ok);
    assert_eq!(len, 3);
    // all tied, lower id first
    assert_eq!(buf[0], 0);
    unsafe {
        fedmoe_plan_free(plan);
        fedmoe_scores_free(s);
    }
}

#[test]
fn empty_participant_list_is_rejected() {
    let s = scores(1, 1);
    let profiles = [capacity(1.0)];
    let mut plan = ptr::null_mut();
    let st = unsafe {
        fedmoe_assign_round(
            s,
            profiles.as_ptr(),
            1,
            &SPEC,
            1,
            ptr::null(),
            0,
            FedmoeStrategy::Random,
            1.0,
            1.0,
            0,
            false,
            &mut plan,
        )
    };
    assert_eq!(st, FedmoeStatus::InvalidArgument);
    assert!(plan.is_null());
    unsafe { fedmoe_scores_free(s) };
}

#[test]
fn load_stats_known_values() {
    let (mut cv, mut gini) = (f64::NAN, f64::NAN);
    let even = [2.0; 4];
    assert_eq!(unsafe { fedmoe_load_stats(even.as_ptr(), 4, &mut cv, &mut gini) }, FedmoeStatus::Ok);
    assert_eq!((cv, gini), (0.0, 0.0));
    // mean 1, population variance (1 + 1 + 1 + 9) / 4 = 3
    let one = [0.0, 0.0, 0.0, 4.0];
    assert_eq!(unsafe { fedmoe_load_stats(one.as_ptr(), 4, &mut cv, &mut gini) }, FedmoeStatus::Ok);
    assert!((cv - 3f64.sqrt()).abs() < 1e-12);
    assert!((gini - 0.75).abs() < 1e-12);
    let bad = [1.0, -1.0];
    assert_eq!(
        unsafe { fedmoe_load_stats(bad.as_ptr(), 2, &mut cv, &mut gini) },
        FedmoeStatus::InvalidArgument
    );
}

#[test]
fn simulation_round_trip() {
    let text = CString::new(TINY).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { fedmoe_simulation_run(text.as_ptr(), &mut sim) }, FedmoeStatus::Ok, "{}", last_error());
    let mut rounds = 0;
    assert_eq!(unsafe { fedmoe_simulation_num_rounds(sim, &mut rounds) }, FedmoeStatus::Ok);
    assert_eq!(rounds, 3);

    let mut config = fedmoe::federation::SimConfig::from_toml(TINY).unwrap();
    config.workers = 1;
    let expected = fedmoe::federation::run_simulation(&config).unwrap();
    for r in 0..rounds {
        let (mut acc, mut loss, mut time) = (0.0, 0.0, 0.0);
        assert_eq!(
            unsafe { fedmoe_simulation_round(sim, r, &mut acc, &mut loss, &mut time) },
            FedmoeStatus::Ok
        );
        let rec = &expected.records[r];
        assert_eq!((acc, loss, time), (rec.accuracy, rec.loss, rec.round_time));
    }
    let (mut a, mut l, mut t) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { fedmoe_simulation_round(sim, 3, &mut a, &mut l, &mut t) }, FedmoeStatus::Index);

    let mut rate = -1.0;
    assert_eq!(unsafe { fedmoe_simulation_alignment_recovery(sim, &mut rate) }, FedmoeStatus::Ok);
    assert!((0.0..=1.0).contains(&rate));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.ckpt");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fedmoe_simulation_write_checkpoint(sim, cpath.as_ptr()) }, FedmoeStatus::Ok);
    // checkpoints hold f32 values, so compare the encoded bytes
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes, fedmoe::moe::checkpoint::encode(&expected.params, 5, 3));
    let (header, _) = fedmoe::moe::checkpoint::read(&path).unwrap();
    assert_eq!((header.seed, header.round), (5, 3));
    unsafe { fedmoe_simulation_free(sim) };
}

#[test]
fn bad_config_text() {
    let text = CString::new("num_rounds = \"many\"").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { fedmoe_simulation_run(text.as_ptr(), &mut sim) }, FedmoeStatus::Config);
    assert!(sim.is_null());
    assert!(last_error().contains("num_rounds"));

    let text = CString::new("[data]\nnum_clients = 0").unwrap();
    assert_eq!(unsafe { fedmoe_simulation_run(text.as_ptr(), &mut sim) }, FedmoeStatus::Config);
    assert!(last_error().contains("num_clients"));
}
