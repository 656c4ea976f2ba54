use ieff::estimators::CriticConfig;
use ieff::harness::experiments::{estimator_swap_ablation, signals_task};
use ieff::channels::ChannelSpec;

/// Small critic: one-dimensional columns need little capacity, and the
/// ablation trains one critic per column per estimator.
fn ablation_critic() -> CriticConfig {
    CriticConfig {
        hidden_widths: vec![16],
        learning_rate: 1e-2,
        batch_size: 256,
        max_steps: 300,
        patience: 3,
        eval_every: 50,
        val_fraction: 0.2,
        seed: 0,
    }
}

#[test]
fn estimator_swap_keeps_channel_ranking() {
    let seeds: Vec<u64> = (0..10).collect();
    let outcomes = estimator_swap_ablation(2000, &seeds, 3, &ablation_critic()).unwrap();
    let agree = outcomes.iter().filter(|o| o.agree).count();
    for o in outcomes.iter().filter(|o| !o.agree) {
        eprintln!("seed {} disagrees: {:?}", o.seed, o.rankings);
    }
    assert!(agree >= 9, "{agree}/10 seeds agree");
    for o in &outcomes {
        assert_eq!(o.rankings.len(), 3);
        assert_eq!(o.rankings[0].order.len(), 3);
    }
}

#[test]
fn signals_task_uses_the_three_signal_channels() {
    let t = signals_task(200, 0).unwrap();
    assert_eq!(t.data.len(), 200);
    assert_eq!(t.data.dim(), 128);
    let labels: Vec<String> = t.channels.iter().map(ChannelSpec::label).collect();
    assert_eq!(labels, ["fft_top20", "randproj_k=16", "downsample_32"]);
}
