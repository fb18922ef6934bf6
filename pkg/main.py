#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
语义目标导航训练与评估软件 1.0
作者：金洪松

子命令:
  gen-scenes        生成场景清单
  build-semantics   构建描述语料库并训练句子编码器
  dump-annotations  导出全部位姿的区域描述标注
  train             A3C 训练 SN/SSN
  eval              评估检查点（或随机/最短路基线）
  experiment        T1/T2 对比实验、单目标收敛实验、目标选择方式对比
  plot              绘制奖励曲线
"""

import argparse
import os
import sys

import pandas as pd

# 添加模块路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.a3c import train
from navigation.errors import ConfigError, NavigationError
from navigation.evalharness import (REGIME_EVAL_EVERY, ComparisonTable, ExperimentConfig, compare_target_regimes,
                                    evaluate, run_convergence, run_t1, run_t2, split_held_out, training_targets)
from navigation.gridscene import generate_inventory, generate_scene, select_targets
from navigation.semantics import build_corpus, semantic_width, train_autoencoder
from utils.checkpoint import load_encoder, load_params, save_encoder, save_params
from utils.exporter import (ResultExporter, load_reward_log, load_scene_dir, read_targets,
                            write_annotation_dump, write_scene_dir, write_targets, write_vocabulary)
from utils.validator import config_sections, load_run_config
from visualization.plotter import ResultPlotter


TARGET_CHOICES = {'random': 'random', 'object': 'object_oriented', 'top-semantic': 'top_semantic'}
PARAMS_FILE = 'params.bin'
REWARDS_FILE = 'rewards.csv'
TARGETS_FILE = 'targets.json'


def vocabulary_path(encoder_path):
    return os.path.splitext(encoder_path)[0] + '_vocab.txt'


def cmd_gen_scenes(args):
    scenes = generate_inventory(args.count_per_type, args.width, args.height, args.seed)
    paths = write_scene_dir(scenes, args.out)
    print(f"✓ 已生成 {len(paths)} 个场景 ({args.width}x{args.height})，清单写入 {args.out}")
    return 0


def cmd_build_semantics(args):
    scenes = load_scene_dir(args.scenes)
    corpus = build_corpus(scenes)
    stats = corpus.stats()
    print(f"语料库: {stats['sentences']} 条语句，词表 {stats['vocabulary']} 个词，"
          f"平均每句 {stats['mean_tokens']:.2f} 个词")
    encoder = train_autoencoder(corpus, args.dim, args.epochs, args.lr, args.seed, args.hidden)
    print(f"自编码器损失: {encoder.loss_history[0]:.4f} -> {encoder.loss_history[-1]:.4f}")
    save_encoder(encoder, args.out)
    write_vocabulary(corpus.vocabulary, vocabulary_path(args.out))
    print(f"✓ 编码器检查点 (D_s={encoder.sentence_dim}) 写入 {args.out}")
    return 0


def cmd_dump_annotations(args):
    scenes = load_scene_dir(args.scenes)
    lines = write_annotation_dump(scenes, args.out)
    print(f"✓ 已导出 {lines} 行标注到 {args.out}")
    return 0


def _train_overrides(args):
    return {
        'policynet': {'variant': args.variant},
        'a3c': {
            'workers': args.workers,
            'total_frames': args.frames,
            'seed': args.seed,
            'target_mode': TARGET_CHOICES[args.targets] if args.targets else None,
        },
        'paths': {'scenes': args.scenes, 'encoder': args.encoder},
    }


def cmd_train(args):
    config = load_run_config(args.config, _train_overrides(args))
    train_config = config.train
    if not config.paths['scenes']:
        raise ConfigError("缺少场景目录 (--scenes 或配置 [paths] scenes)")
    encoder = None
    if train_config.variant == 'ssn':
        if not config.paths['encoder']:
            raise ConfigError("SSN 训练需要句子编码器 (--encoder 或配置 [paths] encoder)")
        encoder = load_encoder(config.paths['encoder'])
        if encoder.sentence_dim != train_config.sentence_dim and args.config:
            raise ConfigError(f"编码器维度 D_s={encoder.sentence_dim} 与配置 sentence_dim="
                              f"{train_config.sentence_dim} 不一致")

    scenes = load_scene_dir(config.paths['scenes'])
    if args.task == 't2':
        scenes, held = split_held_out(scenes)
        print(f"留出场景: {', '.join(s.id for s in held)}")
    targets = training_targets(scenes, train_config.target_mode, config.evaluation.targets_per_scene,
                               train_config.seed)

    os.makedirs(args.out, exist_ok=True)
    write_targets(targets, os.path.join(args.out, TARGETS_FILE))
    params, log = train(train_config, scenes, targets, encoder=encoder,
                        log_path=os.path.join(args.out, REWARDS_FILE), verbose=True)
    save_params(params, os.path.join(args.out, PARAMS_FILE))
    successes = sum(1 for r in log.records if r.success)
    print(f"✓ 参数写入 {os.path.join(args.out, PARAMS_FILE)}，回合 {len(log)}，成功 {successes}")
    return 0


def cmd_eval(args):
    config = load_run_config(args.config, {'eval': {'episodes': args.episodes, 'cap': args.cap,
                                                   'seed': args.seed, 'workers': args.workers}})
    settings = config.evaluation
    scenes = load_scene_dir(args.scenes)

    if args.oracle or args.random:
        params, encoder = None, None
        policy = 'oracle' if args.oracle else 'random'
        model = 'Oracle' if args.oracle else 'Random'
    else:
        if not args.checkpoint:
            raise ConfigError("评估网络需要 --checkpoint")
        params = load_params(args.checkpoint)
        policy = 'greedy'
        model = params.variant.upper()
        if args.config and params.F != config.train.feature_dim:
            raise ConfigError(f"检查点特征维度 F={params.F} 与配置 feature_dim={config.train.feature_dim} 不一致")
        encoder = None
        if params.is_semantic:
            if not args.encoder:
                raise ConfigError("SSN 检查点评估需要 --encoder")
            encoder = load_encoder(args.encoder)
            if semantic_width(encoder.sentence_dim) != params.S_f:
                raise ConfigError(f"语义维度不匹配: 检查点 S_f={params.S_f}，"
                                  f"编码器 D_s={encoder.sentence_dim} 对应 {semantic_width(encoder.sentence_dim)}")

    _, held = split_held_out(scenes)
    excluded = {}
    if args.task == 't1' and args.checkpoint:
        targets_path = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), TARGETS_FILE)
        if os.path.exists(targets_path):
            excluded = {scene_id: [t.pose for t in ts] for scene_id, ts in read_targets(targets_path).items()}
    targets = {scene.id: select_targets(scene, settings.eval_target_mode, settings.eval_targets, settings.seed,
                                        exclude=excluded.get(scene.id, ()))
               for scene in held}

    report = evaluate(params, held, targets, settings.episodes, settings.cap, encoder=encoder, policy=policy,
                      seed=settings.seed, feature_seed=config.train.feature_seed,
                      match_heading=config.train.match_heading, workers=settings.workers)
    table = ComparisonTable(args.task)
    table.add(model, report)
    table.held_out = [scene.id for scene in held]
    print(table.render_text(), end='')
    _export_table(table, args.out, 'report', config_sections(config))
    return 0


def _export_table(table, out_dir, prefix, settings=None):
    exporter = ResultExporter()
    for path, ok, msg in exporter.export_all(table, out_dir, prefix, settings):
        print(f"{'✓' if ok else '✗'} {msg}: {path}")


def cmd_experiment(args):
    config = load_run_config(args.config, {'a3c': {'workers': args.workers}})
    try:
        seeds = [int(s) for s in args.seeds.split(',') if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"--seeds 格式错误: {args.seeds}") from exc
    if not seeds:
        raise ConfigError("--seeds 至少需要一个种子")
    os.makedirs(args.out, exist_ok=True)

    if args.task in ('convergence', 'regimes'):
        return _run_convergence_experiments(args, config, seeds)

    summaries = []
    for seed in seeds:
        experiment = ExperimentConfig(
            scenes_per_type=config.scenes.count_per_type, width=config.scenes.width,
            height=config.scenes.height, scene_seed=config.scenes.seed,
            targets_per_scene=config.evaluation.targets_per_scene, eval_targets=config.evaluation.eval_targets,
            eval_target_mode=config.evaluation.eval_target_mode, episodes_per_target=config.evaluation.episodes,
            cap=config.evaluation.cap, seed=seed, eval_seed=config.evaluation.seed,
            eval_workers=config.evaluation.workers, train=config.train.replace(seed=seed),
            autoencoder=config.autoencoder,
        )
        if args.frames:
            experiment.t1_frames = experiment.t2_frames = args.frames
        print(f"=== 任务 {args.task.upper()}，种子 {seed} ===")
        runner = run_t1 if args.task == 't1' else run_t2
        table = runner(experiment, verbose=True)
        print(table.render_text(), end='')
        _export_table(table, args.out, f"{args.task}_seed{seed}", config_sections(config))
        for model in table.models():
            summaries.append({'seed': seed, 'model': model, 'success_pct': table.mean_success(model),
                              'el': table.report(model).mean_length()})

    frame = pd.DataFrame(summaries)
    median = frame.groupby('model', sort=False)[['success_pct', 'el']].median().reset_index()
    median.to_csv(os.path.join(args.out, f"{args.task}_median.csv"), index=False)
    print("各模型成功率中位数:")
    for _, row in median.iterrows():
        print(f"  {row['model']}: {row['success_pct']:.1f}%")
    return 0


def _run_convergence_experiments(args, config, seeds):
    width = height = args.size
    scene = generate_scene(config.scenes.seed, 'bathroom', width, height)
    train_config = config.train.replace(variant='sn', total_frames=args.frames or 300_000,
                                        workers=args.workers or 2)
    settings = config.evaluation
    if args.task == 'convergence':
        rows = []
        for seed in seeds:
            target = select_targets(scene, 'object_oriented', 1, seed)[0]
            print(f"=== 单目标收敛实验，种子 {seed}，目标 {target.pose} ===")
            result = run_convergence(scene, target, train_config.replace(seed=seed), args.eval_every or 20_000,
                                     settings.episodes, settings.cap, stop_at_threshold=False,
                                     eval_seed=settings.seed, verbose=True)
            for frames, success, length in zip(result.frames, result.success_pct, result.mean_length):
                rows.append({'seed': seed, 'frames': frames, 'success_pct': success, 'el': length,
                             'shortest_mean': result.shortest_mean})
        pd.DataFrame(rows).to_csv(os.path.join(args.out, 'convergence.csv'), index=False)
        print(f"✓ 收敛曲线写入 {os.path.join(args.out, 'convergence.csv')}")
        return 0

    print(f"=== 目标选择方式对比，种子 {seeds} ===")
    comparison = compare_target_regimes(scene, train_config, seeds, args.eval_every or REGIME_EVAL_EVERY,
                                        settings.episodes, settings.cap, verbose=True)
    comparison.to_frame().to_csv(os.path.join(args.out, 'regimes.csv'), index=False)
    comparison.summary_frame().to_csv(os.path.join(args.out, 'regimes_summary.csv'), index=False)
    print(f"✓ 达到90%成功率所需帧数中位数（评估间隔 {comparison.eval_every} 帧）: "
          f"物体导向 {comparison.object_median}，随机 {comparison.random_median}")
    if not comparison.object_faster:
        print("✗ 物体导向目标没有比随机目标更快收敛")
    return 0


def cmd_plot(args):
    log = load_reward_log(args.log)
    count = ResultPlotter().save_reward_plot(log, args.out, args.window)
    print(f"✓ 奖励曲线 ({count} 条) 写入 {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog='main.py', description='语义目标导航训练与评估软件')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('gen-scenes', help='生成场景清单')
    p.add_argument('--count-per-type', type=int, default=5)
    p.add_argument('--width', type=int, default=8)
    p.add_argument('--height', type=int, default=8)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser('build-semantics', help='构建语料库并训练句子编码器')
    p.add_argument('--scenes', required=True)
    p.add_argument('--dim', type=int, default=64)
    p.add_argument('--hidden', type=int, default=128)
    p.add_argument('--epochs', type=int, default=200)
    p.add_argument('--lr', type=float, default=0.05)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_build_semantics)

    p = sub.add_parser('dump-annotations', help='导出区域描述标注')
    p.add_argument('--scenes', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_dump_annotations)

    p = sub.add_parser('train', help='A3C 训练')
    p.add_argument('--config')
    p.add_argument('--scenes')
    p.add_argument('--variant', choices=['sn', 'ssn'])
    p.add_argument('--targets', choices=sorted(TARGET_CHOICES))
    p.add_argument('--encoder')
    p.add_argument('--task', choices=['t1', 't2'], default='t1')
    p.add_argument('--workers', type=int)
    p.add_argument('--frames', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='评估')
    p.add_argument('--config')
    p.add_argument('--checkpoint')
    p.add_argument('--scenes', required=True)
    p.add_argument('--task', choices=['t1', 't2'], required=True)
    p.add_argument('--episodes', type=int)
    p.add_argument('--cap', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--workers', type=int)
    p.add_argument('--encoder')
    baseline = p.add_mutually_exclusive_group()
    baseline.add_argument('--oracle', action='store_true', help='使用BFS最短路策略')
    baseline.add_argument('--random', action='store_true', help='使用均匀随机策略')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('experiment', help='对比实验')
    p.add_argument('--config')
    p.add_argument('--task', choices=['t1', 't2', 'convergence', 'regimes'], required=True)
    p.add_argument('--frames', type=int)
    p.add_argument('--seeds', default='0,1,2')
    p.add_argument('--workers', type=int)
    p.add_argument('--size', type=int, default=8, help='收敛实验的场景边长')
    p.add_argument('--eval-every', type=int, help='评估间隔（帧），缺省收敛实验 20000、目标选择对比 2000')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser('plot', help='绘制奖励曲线')
    p.add_argument('--log', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--window', type=int, default=500)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    """命令行入口，返回退出码：0 成功，2 配置错误，3 文件读写错误，4 数值计算失败"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NavigationError as e:
        print(f"错误: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"文件读写错误: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
