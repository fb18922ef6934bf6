# -*- coding: utf-8 -*-
"""
结果导出器 - 场景文件、词表、标注导出，以及评估报告的 CSV/文本/Excel/JSON 导出
"""

import glob
import json
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from navigation import __author__, __version__
from navigation.a3c import REWARD_LOG_COLUMNS
from navigation.errors import ContractError, SceneFileError
from navigation.evalharness import ComparisonTable
from navigation.featurizer import ViewConfig, annotate, format_annotation_line
from navigation.gridscene import Pose, SceneSpec, Target, valid_poses


MANIFEST_NAME = 'manifest.txt'
SOFTWARE_NAME = '语义目标导航训练与评估软件'


def write_scene_file(scene: SceneSpec, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(scene.to_dict(), f, ensure_ascii=False, indent=2)
        f.write('\n')


def read_scene_file(path: str) -> SceneSpec:
    """读取场景文件，任何解析错误都抛出带文件名的 SceneFileError"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise SceneFileError(f"场景文件 {path} 无法解析: {exc}") from exc
    if not isinstance(data, dict):
        raise SceneFileError(f"场景文件 {path} 顶层必须是对象")
    try:
        return SceneSpec.from_dict(data)
    except (ContractError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise SceneFileError(f"场景文件 {path} 内容错误: {exc}") from exc


def write_scene_dir(scenes: Sequence[SceneSpec], out_dir: str) -> List[str]:
    """
    写出场景目录：每个场景一个 <id>.json，另有 manifest.txt 按顺序列出场景编号

    返回:
    paths: 写出的场景文件路径
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for scene in scenes:
        path = os.path.join(out_dir, f"{scene.id}.json")
        write_scene_file(scene, path)
        paths.append(path)
    with open(os.path.join(out_dir, MANIFEST_NAME), 'w', encoding='utf-8') as f:
        for scene in scenes:
            f.write(scene.id + '\n')
    return paths


def load_scene_dir(scene_dir: str) -> List[SceneSpec]:
    """按 manifest.txt 的顺序读取场景；没有清单时按文件名排序读取全部 .json"""
    if not os.path.isdir(scene_dir):
        raise SceneFileError(f"场景目录不存在: {scene_dir}")
    manifest = os.path.join(scene_dir, MANIFEST_NAME)
    if os.path.exists(manifest):
        with open(manifest, 'r', encoding='utf-8') as f:
            ids = [line.strip() for line in f if line.strip()]
        paths = [os.path.join(scene_dir, f"{scene_id}.json") for scene_id in ids]
    else:
        paths = sorted(glob.glob(os.path.join(scene_dir, '*.json')))
    if not paths:
        raise SceneFileError(f"场景目录 {scene_dir} 中没有场景文件")
    return [read_scene_file(path) for path in paths]


def write_vocabulary(vocabulary: Sequence[str], path: str):
    """词表文件：每行一个词，已排序"""
    with open(path, 'w', encoding='utf-8') as f:
        for token in sorted(vocabulary):
            f.write(token + '\n')


def write_annotation_dump(scenes: Sequence[SceneSpec], path: str, view: Optional[ViewConfig] = None) -> int:
    """逐 (场景, 位姿) 写出区域描述标注，返回行数"""
    lines = 0
    with open(path, 'w', encoding='utf-8') as f:
        for scene in scenes:
            for pose in valid_poses(scene):
                f.write(format_annotation_line(scene, pose, annotate(scene, pose, view)) + '\n')
                lines += 1
    return lines


def write_targets(targets: Dict[str, List[Target]], path: str):
    """训练目标文件：场景编号 -> [[x, y, heading, mode], ...]"""
    data = {scene_id: [[t.pose.x, t.pose.y, t.pose.heading, t.mode] for t in scene_targets]
            for scene_id, scene_targets in targets.items()}
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
        f.write('\n')


def read_targets(path: str) -> Dict[str, List[Target]]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return {scene_id: [Target(Pose(int(x), int(y), int(h)), str(mode)) for x, y, h, mode in items]
                for scene_id, items in data.items()}
    except (OSError, ValueError, TypeError, AttributeError) as exc:
        raise SceneFileError(f"目标文件 {path} 无法解析: {exc}") from exc


def load_reward_log(path: str) -> pd.DataFrame:
    """读取奖励日志CSV并检查列名"""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise SceneFileError(f"奖励日志 {path} 为空") from exc
    except (OSError, pd.errors.ParserError) as exc:
        raise SceneFileError(f"奖励日志 {path} 无法解析: {exc}") from exc
    missing = [c for c in REWARD_LOG_COLUMNS if c not in frame.columns]
    if missing:
        raise SceneFileError(f"奖励日志 {path} 缺少列: {', '.join(missing)}")
    if frame.empty:
        raise SceneFileError(f"奖励日志 {path} 没有任何回合记录")
    return frame


class ResultExporter:
    """结果导出器类，报告写出方法返回 (success, message)"""

    def export_report_csv(self, table: ComparisonTable, filename: str):
        """
        导出对比结果CSV

        参数:
        table: 对比表
        filename: 输出文件名，列为 scene_type,model,el,success_pct
        """
        try:
            table.to_frame().to_csv(filename, index=False)
            return True, "CSV导出成功"
        except Exception as e:
            return False, f"CSV导出失败：{str(e)}"

    def export_per_target_csv(self, table: ComparisonTable, filename: str):
        try:
            self._per_target_frame(table).to_csv(filename, index=False)
            return True, "分目标CSV导出成功"
        except Exception as e:
            return False, f"分目标CSV导出失败：{str(e)}"

    def _per_target_frame(self, table: ComparisonTable) -> pd.DataFrame:
        rows = []
        for model, report in table.rows:
            for row in report.per_target:
                rows.append({'model': model, **row})
        return pd.DataFrame(rows, columns=['model', 'scene_id', 'scene_type', 'target_idx',
                                           'el', 'success_pct', 'episodes'])

    def export_to_excel(self, table: ComparisonTable, filename: str,
                        settings: Optional[List[Tuple[str, Dict[str, Any]]]] = None):
        """
        导出Excel工作簿：对比结果、分目标统计、实验参数三个工作表
        """
        try:
            with pd.ExcelWriter(filename, engine='openpyxl') as writer:
                table.to_frame().to_excel(writer, sheet_name='对比结果', index=False)
                self._per_target_frame(table).to_excel(writer, sheet_name='分目标统计', index=False)
                rows = [{'节': section, '参数': key, '取值': str(value)}
                        for section, items in (settings or []) for key, value in items.items()]
                if table.held_out:
                    rows.append({'节': 'eval', '参数': 'held_out', '取值': ', '.join(table.held_out)})
                pd.DataFrame(rows, columns=['节', '参数', '取值']).to_excel(
                    writer, sheet_name='实验参数', index=False)
                for sheet in writer.sheets.values():
                    for column in 'ABCDEFG':
                        sheet.column_dimensions[column].width = 16
            return True, "Excel导出成功"
        except Exception as e:
            return False, f"Excel导出失败：{str(e)}"

    def export_to_json(self, table: ComparisonTable, filename: str,
                       settings: Optional[List[Tuple[str, Dict[str, Any]]]] = None):
        try:
            export_data = {
                'software_info': {
                    'name': SOFTWARE_NAME,
                    'version': __version__,
                    'author': __author__,
                },
                'task': table.task,
                'held_out': list(table.held_out),
                'settings': {section: items for section, items in (settings or [])},
                'results': table.to_frame().to_dict(orient='records'),
                'per_target': self._per_target_frame(table).to_dict(orient='records'),
            }
            with open(filename, 'w', encoding='utf-8') as f:
                json.dump(export_data, f, ensure_ascii=False, indent=2, default=str)
            return True, "JSON导出成功"
        except Exception as e:
            return False, f"JSON导出失败：{str(e)}"

    def generate_summary_report(self, table: ComparisonTable) -> str:
        """生成汇总报告文本：对齐的对比表加上各模型总体成功率"""
        lines = [
            "=" * 60,
            f"{SOFTWARE_NAME} {__version__} 评估报告",
            "=" * 60,
            "",
            table.render_text().rstrip('\n'),
            "",
            "总体成功率",
            "-" * 30,
        ]
        for model, report in table.rows:
            lines.append(f"{model}: {report.mean_success():.1f}%  (平均回合长度 {report.mean_length():.1f})")
        lines.extend(["", "=" * 60])
        return "\n".join(lines) + "\n"

    def export_summary_report(self, table: ComparisonTable, filename: str):
        try:
            with open(filename, 'w', encoding='utf-8') as f:
                f.write(self.generate_summary_report(table))
            return True, "汇总报告导出成功"
        except Exception as e:
            return False, f"汇总报告导出失败：{str(e)}"

    def export_all(self, table: ComparisonTable, out_dir: str, prefix: str = 'report',
                   settings: Optional[List[Tuple[str, Dict[str, Any]]]] = None) -> List[Tuple[str, bool, str]]:
        """
        导出全部格式

        返回:
        outcomes: [(文件路径, 是否成功, 信息)]
        """
        os.makedirs(out_dir, exist_ok=True)
        jobs = [
            (f"{prefix}.csv", lambda p: self.export_report_csv(table, p)),
            (f"{prefix}_targets.csv", lambda p: self.export_per_target_csv(table, p)),
            (f"{prefix}.txt", lambda p: self.export_summary_report(table, p)),
            (f"{prefix}.xlsx", lambda p: self.export_to_excel(table, p, settings)),
            (f"{prefix}.json", lambda p: self.export_to_json(table, p, settings)),
        ]
        outcomes = []
        for name, job in jobs:
            path = os.path.join(out_dir, name)
            ok, msg = job(path)
            outcomes.append((path, ok, msg))
        return outcomes
