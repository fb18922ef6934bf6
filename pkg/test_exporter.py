#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
结果导出功能测试脚本
场景目录读写、词表与标注导出、对比报告的 CSV/文本/Excel/JSON 导出
"""

import json
import os
import sys
import tempfile

import openpyxl
import pandas as pd
import pytest

# 添加项目路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.errors import SceneFileError
from navigation.evalharness import ComparisonTable, evaluate
from navigation.gridscene import generate_inventory, generate_scene, select_targets, valid_poses
from utils.exporter import (MANIFEST_NAME, ResultExporter, load_reward_log, load_scene_dir, read_scene_file,
                            read_targets, write_annotation_dump, write_scene_dir, write_targets,
                            write_vocabulary)


def sample_table():
    scene = generate_scene(4, 'kitchen', 6, 6)
    targets = {scene.id: select_targets(scene, 'random', 2, seed=0)}
    table = ComparisonTable('t2')
    table.add('Random', evaluate(None, [scene], targets, 3, 30, policy='random'))
    table.add('Oracle', evaluate(None, [scene], targets, 3, 30, policy='oracle'))
    table.held_out = [scene.id]
    return table


def test_scene_directory_round_trip():
    print("测试场景目录读写...")
    scenes = generate_inventory(count_per_type=2, width=6, height=6, seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_scene_dir(scenes, tmp)
        assert len(paths) == 8
        with open(os.path.join(tmp, MANIFEST_NAME), encoding='utf-8') as f:
            assert [line.strip() for line in f] == [s.id for s in scenes]
        assert load_scene_dir(tmp) == scenes

        # 相同参数再次生成，文件字节完全一致
        with open(paths[0], 'rb') as f:
            first = f.read()
        write_scene_dir(generate_inventory(count_per_type=2, width=6, height=6, seed=3), tmp)
        with open(paths[0], 'rb') as f:
            assert f.read() == first
    print("场景目录读写测试通过！\n")


def test_corrupt_scene_file_names_the_file():
    with tempfile.TemporaryDirectory() as tmp:
        write_scene_dir([generate_scene(0, 'bedroom', 6, 6)], tmp)
        path = os.path.join(tmp, 'bedroom-0.json')
        with open(path, 'w', encoding='utf-8') as f:
            f.write('{"id": "bedroom-0", "walls": [')
        with pytest.raises(SceneFileError) as info:
            load_scene_dir(tmp)
        assert 'bedroom-0.json' in str(info.value)

        with open(path, 'w', encoding='utf-8') as f:
            json.dump({'id': 'x'}, f)
        with pytest.raises(SceneFileError):
            read_scene_file(path)
        with pytest.raises(SceneFileError):
            load_scene_dir(os.path.join(tmp, 'missing'))


def test_vocabulary_and_annotation_dump():
    print("测试词表与标注导出...")
    scenes = [generate_scene(1, 'bathroom', 6, 6)]
    with tempfile.TemporaryDirectory() as tmp:
        vocab_path = os.path.join(tmp, 'vocab.txt')
        write_vocabulary(['sink', 'a', 'white'], vocab_path)
        with open(vocab_path, encoding='utf-8') as f:
            assert f.read().split() == ['a', 'sink', 'white']

        dump_path = os.path.join(tmp, 'annotations.tsv')
        lines = write_annotation_dump(scenes, dump_path)
        assert lines == len(valid_poses(scenes[0]))
        with open(dump_path, encoding='utf-8') as f:
            rows = f.read().splitlines()
        assert len(rows) == lines
        assert all(row.split('\t')[0] == scenes[0].id for row in rows)
        assert any(len(row.split('\t')) > 4 for row in rows)
    print("词表与标注导出测试通过！\n")


def test_targets_file_round_trip():
    scene = generate_scene(2, 'kitchen', 6, 6)
    targets = {scene.id: select_targets(scene, 'object_oriented', 3, seed=0)}
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, 'targets.json')
        write_targets(targets, path)
        assert read_targets(path) == targets
        with open(path, 'w', encoding='utf-8') as f:
            f.write('[1, 2')
        with pytest.raises(SceneFileError):
            read_targets(path)


def test_reward_log_loading():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, 'rewards.csv')
        with open(path, 'w', encoding='utf-8') as f:
            f.write('frames,scene_id,target_idx,episode_return,episode_len,success\n'
                    '12,kitchen_00,0,9.88,12,1\n')
        assert len(load_reward_log(path)) == 1
        with open(path, 'w', encoding='utf-8') as f:
            f.write('frames,scene_id\n1,a\n')
        with pytest.raises(SceneFileError) as info:
            load_reward_log(path)
        assert 'episode_return' in str(info.value)
        with open(path, 'w', encoding='utf-8') as f:
            f.write('')
        with pytest.raises(SceneFileError):
            load_reward_log(path)


def test_report_exports():
    """测试对比报告导出"""
    print("测试对比报告导出...")
    table = sample_table()
    exporter = ResultExporter()
    settings = [('eval', {'episodes': 3, 'cap': 30})]
    with tempfile.TemporaryDirectory() as tmp:
        outcomes = exporter.export_all(table, tmp, 'report', settings)
        for path, ok, msg in outcomes:
            print(f"{'✓' if ok else '✗'} {msg}: {os.path.basename(path)}")
            assert ok, msg
            assert os.path.exists(path)
        assert sorted(os.path.basename(p) for p, _, _ in outcomes) == [
            'report.csv', 'report.json', 'report.txt', 'report.xlsx', 'report_targets.csv']

        frame = pd.read_csv(os.path.join(tmp, 'report.csv'))
        assert list(frame.columns) == ['scene_type', 'model', 'el', 'success_pct']
        assert frame['model'].tolist() == ['Random', 'Oracle']
        assert frame.loc[1, 'success_pct'] == 100.0

        targets = pd.read_csv(os.path.join(tmp, 'report_targets.csv'))
        assert len(targets) == 4

        workbook = openpyxl.load_workbook(os.path.join(tmp, 'report.xlsx'))
        assert workbook.sheetnames == ['对比结果', '分目标统计', '实验参数']

        with open(os.path.join(tmp, 'report.json'), encoding='utf-8') as f:
            data = json.load(f)
        assert data['task'] == 't2'
        assert data['held_out'] == ['kitchen-4']
        assert data['settings']['eval']['cap'] == 30

        with open(os.path.join(tmp, 'report.txt'), encoding='utf-8') as f:
            text = f.read()
        assert 'Task T2' in text and 'Oracle: 100.0%' in text

    ok, msg = exporter.export_report_csv(table, os.path.join(tempfile.gettempdir(), 'no', 'such', 'dir.csv'))
    assert not ok and 'CSV导出失败' in msg
    print("对比报告导出测试通过！\n")


if __name__ == "__main__":
    print("=" * 50)
    print("结果导出功能测试")
    print("=" * 50)
    test_scene_directory_round_trip()
    test_corrupt_scene_file_names_the_file()
    test_vocabulary_and_annotation_dump()
    test_targets_file_round_trip()
    test_reward_log_loading()
    test_report_exports()
    print("所有测试通过！")
