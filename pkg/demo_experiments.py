#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
语义目标导航训练与评估软件 - 实验演示
依次运行：最短路与零学习对照、单目标收敛、目标选择方式对比、T1/T2 对比实验
结果写入 demo_output/ 目录

用法:
  python demo_experiments.py           桌面规模（耗时数小时）
  python demo_experiments.py --quick   缩小规模，仅检查流程

作者：金洪松
"""

import os
import sys

import pandas as pd

# 添加项目路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.a3c import TrainConfig, train
from navigation.evalharness import (ComparisonTable, ExperimentConfig, compare_target_regimes, evaluate,
                                    experiment_summary, run_convergence, run_t1, run_t2)
from navigation.gridscene import generate_inventory, generate_scene, select_targets, shortest_path_length
from navigation.policynet import init_params
from utils.exporter import ResultExporter
from visualization.plotter import ResultPlotter

OUTPUT_DIR = 'demo_output'

DESK_SCALE = {
    'size': 16,
    'convergence_size': 8,
    'convergence_frames': 300_000,
    'eval_every': 20_000,
    'regime_eval_every': 1_000,
    'regime_frames': 100_000,
    'episodes': 100,
    'cap': 1000,
    'regime_seeds': (0, 1, 2, 3, 4),
    'table_seeds': (0, 1, 2),
    't1_frames': 500_000,
    't2_frames': 1_000_000,
    'control_frames': 20_000,
}

QUICK_SCALE = {
    'size': 8,
    'convergence_size': 6,
    'convergence_frames': 4_000,
    'eval_every': 2_000,
    'regime_eval_every': 500,
    'regime_frames': 4_000,
    'episodes': 10,
    'cap': 200,
    'regime_seeds': (0,),
    'table_seeds': (0,),
    't1_frames': 2_000,
    't2_frames': 2_000,
    'control_frames': 500,
}


def export_table(table, prefix, config):
    settings = [('experiment', experiment_summary(config))]
    for path, ok, msg in ResultExporter().export_all(table, OUTPUT_DIR, prefix, settings):
        print(f"{'✓' if ok else '✗'} {msg}: {path}")


def experiment_config(scale, seed):
    return ExperimentConfig(
        width=scale['size'], height=scale['size'], episodes_per_target=scale['episodes'], cap=scale['cap'],
        t1_frames=scale['t1_frames'], t2_frames=scale['t2_frames'], seed=seed,
        train=TrainConfig(seed=seed),
    )


def demo_controls(scale):
    """最短路策略应为100%成功；lr=0 训练后参数不变，按策略采样评估应接近随机策略"""
    print("=" * 60)
    print("对照实验：BFS最短路策略与零学习训练")
    print("=" * 60)

    scenes = generate_inventory(2, scale['size'], scale['size'], seed=0)
    targets = {s.id: select_targets(s, 'object_oriented', 2, seed=0) for s in scenes}
    oracle = evaluate(None, scenes, targets, scale['episodes'], scale['cap'], policy='oracle', workers=4)
    print(f"✓ 最短路策略成功率 {oracle.mean_success():.1f}%")
    lengths_match = all(
        e.length == shortest_path_length(next(s for s in scenes if s.id == e.scene_id), e.start,
                                         targets[e.scene_id][e.target_idx].pose)
        for e in oracle.episodes
    )
    print(f"✓ 回合长度等于BFS最短路: {lengths_match}")

    config = TrainConfig(lr=0.0, workers=2, total_frames=scale['control_frames'], seed=0)
    initial = init_params('sn', config.feature_dim, config.embed_dim, seed=config.seed)
    params, _ = train(config, scenes, targets)
    print(f"✓ lr=0 训练后参数逐位不变: {params.same_as(initial)}")

    random_report = evaluate(None, scenes, targets, scale['episodes'], scale['cap'], policy='random', workers=4)
    frozen_report = evaluate(params, scenes, targets, scale['episodes'], scale['cap'], policy='sample', workers=4)
    gap = frozen_report.mean_success() - random_report.mean_success()
    print(f"  随机策略 {random_report.mean_success():.1f}%，lr=0 网络采样 {frozen_report.mean_success():.1f}%，"
          f"相差 {gap:+.1f} 个百分点")

    table = ComparisonTable('t1')
    table.add('Random', random_report)
    table.add('SN_lr0', frozen_report)
    table.add('Oracle', oracle)
    print(table.render_text())
    export_table(table, 'controls', ExperimentConfig(episodes_per_target=scale['episodes'], cap=scale['cap']))


def demo_convergence(scale):
    """单场景单目标收敛曲线，并绘制训练奖励曲线"""
    print("=" * 60)
    print("单目标收敛实验")
    print("=" * 60)

    size = scale['convergence_size']
    scene = generate_scene(0, 'bathroom', size, size)
    target = select_targets(scene, 'object_oriented', 1, seed=0)[0]
    config = TrainConfig(workers=2, total_frames=scale['convergence_frames'], seed=0)
    print(f"场景 {scene.id} ({size}x{size})，目标 {target.pose}")
    result = run_convergence(scene, target, config, scale['eval_every'], scale['episodes'], scale['cap'],
                             stop_at_threshold=False, verbose=True)
    frame = pd.DataFrame({'frames': result.frames, 'success_pct': result.success_pct,
                          'el': result.mean_length})
    frame.to_csv(os.path.join(OUTPUT_DIR, 'convergence.csv'), index=False)
    final_ratio = result.mean_length[-1] / result.shortest_mean
    print(f"✓ 最终成功率 {result.success_pct[-1]:.1f}%，平均回合长度为最短路的 {final_ratio:.2f} 倍")

    log_path = os.path.join(OUTPUT_DIR, 'convergence_rewards.csv')
    train(config.replace(seed=1), [scene], {scene.id: [target]}, log_path=log_path)
    window = max(1, min(500, scale['convergence_frames'] // 200))
    svg_path = os.path.join(OUTPUT_DIR, 'convergence_rewards.svg')
    ResultPlotter().save_reward_plot(pd.read_csv(log_path), svg_path, window)
    print(f"✓ 奖励曲线写入 {svg_path}")


def demo_target_regimes(scale):
    """物体导向目标与随机目标的收敛速度对比，按较细的评估间隔记录帧数"""
    print("=" * 60)
    print("目标选择方式对比")
    print("=" * 60)

    size = scale['convergence_size']
    scene = generate_scene(0, 'bathroom', size, size)
    config = TrainConfig(workers=2, total_frames=scale['regime_frames'])
    comparison = compare_target_regimes(scene, config, scale['regime_seeds'], scale['regime_eval_every'],
                                        scale['episodes'], scale['cap'], verbose=True)
    comparison.to_frame().to_csv(os.path.join(OUTPUT_DIR, 'regimes.csv'), index=False)
    summary = comparison.summary_frame()
    summary.to_csv(os.path.join(OUTPUT_DIR, 'regimes_summary.csv'), index=False)
    for _, row in summary.iterrows():
        print(f"  {row['mode']}: 中位数 {row['median_frames']} 帧，{row['reached']}/{row['seeds']} 个种子达到90%")
    print(f"✓ 物体导向目标更快收敛（评估间隔 {comparison.eval_every} 帧）: {comparison.object_faster}")


def demo_tables(scale):
    """T1/T2 对比实验，按种子取成功率中位数"""
    for task, runner in (('t1', run_t1), ('t2', run_t2)):
        print("=" * 60)
        print(f"对比实验 {task.upper()}")
        print("=" * 60)
        rows = []
        for seed in scale['table_seeds']:
            config = experiment_config(scale, seed)
            table = runner(config, verbose=True)
            print(table.render_text())
            export_table(table, f"{task}_seed{seed}", config)
            rows.extend({'seed': seed, 'model': model, 'success_pct': table.mean_success(model)}
                        for model in table.models())
        median = pd.DataFrame(rows).groupby('model', sort=False)['success_pct'].median()
        median.to_csv(os.path.join(OUTPUT_DIR, f"{task}_median.csv"))
        for model, value in median.items():
            print(f"  {model}: 成功率中位数 {value:.1f}%")
        if task == 't1':
            ordered = median['SSN_S'] >= median['SSN'] >= median['SN'] >= median['Random']
            print(f"✓ T1 成功率顺序 SSN_S ≥ SSN ≥ SN ≥ Random: {bool(ordered)}")
        else:
            print(f"✓ T2 SSN ≥ Random: {bool(median['SSN'] >= median['Random'])}")


def main():
    quick = '--quick' in sys.argv[1:]
    scale = QUICK_SCALE if quick else DESK_SCALE
    os.makedirs(OUTPUT_DIR, exist_ok=True)
    print(f"语义目标导航实验演示（{'快速' if quick else '桌面'}规模），结果目录 {OUTPUT_DIR}/")
    print()

    demo_controls(scale)
    demo_convergence(scale)
    demo_target_regimes(scale)
    demo_tables(scale)
    print()
    print("✓ 全部实验完成")


if __name__ == "__main__":
    main()
