# cli.py
# 命令列介面：讀取設定與序列檔、執行實驗或擬合、輸出 CSV 與執行紀錄

import argparse
import dataclasses
import logging
import os
import sys
import time
from typing import Callable, List, Optional, Tuple

import numpy as np

from app import current_config
from app.errors import ModelError, NumericError, QdsimError
from app.models import BASIS_5, DeviceParams, EvolveOptions, PTMap, RunManifest
from app.services import analysis_service as analysis
from app.services import document_service as documents
from app.services import dynamics_service as ds
from app.services import experiment_service as es
from app.services import export_service as export
from app.services import noise_service as noise
from app.services import readout_service as readout

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_NUMERIC = 3

SUBCOMMANDS = ('funnel', 'lz', 'lzs', 'exchange', 'esr', 'gap', 'readout', 'fit', 'evolve', 'submit')


class UsageError(Exception):
    """命令列參數錯誤"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ==================== 參數型別 ====================

def parse_range(text: str) -> np.ndarray:
    """
    'start:stop:count' → 含端點的等間隔格點；單一數字表示只有一點

    Raises:
        argparse.ArgumentTypeError: 格式錯誤或 count < 1
    """
    parts = text.split(':')
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) != 3:
            raise ValueError
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"範圍格式應為 start:stop:count（收到 {text!r}）")
    if count < 1:
        raise argparse.ArgumentTypeError(f"count 必須 ≥ 1（收到 {count}）")
    return np.linspace(start, stop, count)


def _log_range(grid: np.ndarray) -> np.ndarray:
    """把 start:stop:count 解讀成等比格點"""
    if grid.size < 2:
        return grid
    if grid[0] <= 0 or grid[-1] <= 0:
        raise ModelError("--log 格點的端點必須為正")
    return np.geomspace(grid[0], grid[-1], grid.size)


# ==================== 解析器 ====================

def _add_common(parser: argparse.ArgumentParser, out_required: bool = True):
    parser.add_argument('--config', help='裝置設定檔（TOML），省略時使用預設參數')
    parser.add_argument('--out', required=out_required, help='輸出 CSV 路徑（相對路徑放在 QDSIM_OUTPUT_DIR 下）')
    parser.add_argument('--seed', type=int, help='主種子（shot 平均與讀出模擬必填）')
    parser.add_argument('--max-phase', type=float, help='每步最大相位（rad）')


def _add_shots(parser: argparse.ArgumentParser):
    parser.add_argument('--shots', type=int, help='準靜態雜訊的 shot 數（需要 --seed）')
    parser.add_argument('--ensemble', action='store_true', help='平均機率而不抽樣二元結果')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='qdsim', description='矽雙量子點兩電子自旋模擬器')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('funnel', help='spin funnel（ε × B）')
    _add_common(p)
    _add_shots(p)
    p.add_argument('--eps', type=parse_range, required=True, help='ε 格點（µeV）')
    p.add_argument('--b', type=parse_range, required=True, help='B_0^z 格點（mT）')
    p.add_argument('--dwell', type=float, default=100.0, help='停留時間（ns）')

    p = sub.add_parser('lz', help='單次 Landau-Zener 通過')
    _add_common(p)
    _add_shots(p)
    p.add_argument('--nu', type=parse_range, required=True, help='能階速度格點（Hz/s）')
    p.add_argument('--log', action='store_true', help='速度以等比間隔取樣')
    p.add_argument('--b0z', type=float, help='外加磁場（mT），預設取設定檔')
    p.add_argument('--window', type=float, help='掃描半寬（以 f_Δ 為單位）')

    p = sub.add_parser('lzs', help='LZS 干涉（ε × τ）')
    _add_common(p)
    _add_shots(p)
    p.add_argument('--eps', type=parse_range, required=True, help='停留點格點（µeV）')
    p.add_argument('--tau', type=parse_range, required=True, help='停留時間格點（ns）')
    p.add_argument('--nu', type=float, help='能階速度（Hz/s），預設為 P_LZ = ½ 的速度')

    p = sub.add_parser('exchange', help='交換振盪（ε × τ）')
    _add_common(p)
    _add_shots(p)
    p.add_argument('--eps', type=parse_range, required=True, help='plunge 深度格點（µeV）')
    p.add_argument('--tau', type=parse_range, required=True, help='停留時間格點（ns）')
    p.add_argument('--b0z', type=float, default=200.0, help='外加磁場（mT）')

    p = sub.add_parser('esr', help='ESR 頻譜（ε × f）')
    _add_common(p)
    _add_shots(p)
    p.add_argument('--eps', type=parse_range, required=True, help='ε 格點（µeV）')
    p.add_argument('--freq', type=parse_range, required=True, help='驅動頻率格點（GHz）')
    p.add_argument('--duration', type=float, help='脈衝長度（ns）')
    p.add_argument('--amplitude', type=float, help='Rabi 頻率（MHz）')

    p = sub.add_parser('gap', help='本徵能隙曲線')
    _add_common(p)
    p.add_argument('--eps', type=parse_range, required=True, help='ε 格點（µeV）')
    p.add_argument('--which', choices=('S_T0', 'S_T-'), default='S_T0')

    p = sub.add_parser('readout', help='單發讀出統計（兩種模式）')
    _add_common(p)
    p.add_argument('--shots', type=int, help='每種模式的 shot 數')
    p.add_argument('--bins', type=int, help='直方圖 bin 數')

    p = sub.add_parser('fit', help='擬合 CSV 資料')
    _add_common(p)
    p.add_argument('--kind', choices=('lz', 'gap', 'decay'), required=True)
    p.add_argument('--input', required=True, help='輸入 CSV（lz: ν,P_T；gap: ε,gap[,B]；decay: τ,P_T）')
    p.add_argument('--which', choices=('S_T0', 'S_T-'), default='S_T0')
    p.add_argument('--bootstrap', action='store_true', help='以 bootstrap 計算信賴區間')

    p = sub.add_parser('evolve', help='依脈衝序列檔演化')
    _add_common(p)
    p.add_argument('--schedule', required=True, help='脈衝序列檔（TOML 或單行 preset）')
    p.add_argument('--trajectory', action='store_true', help='輸出整條軌跡')
    p.add_argument('--frame', choices=('rotating', 'lab'), default='rotating')

    p = sub.add_parser('submit', help='把另一個子命令交給 Celery worker')
    p.add_argument('argv', nargs=argparse.REMAINDER, help='要執行的子命令與參數')
    return parser


# ==================== 執行 ====================

def _read_text(path: str) -> str:
    with open(path, 'r', encoding='utf-8') as f:
        return f.read()


def _load_params(args) -> Tuple[DeviceParams, str]:
    if not args.config:
        return DeviceParams(), ''
    text = _read_text(args.config)
    return documents.parse_device_config(text), text


def _options(args) -> EvolveOptions:
    opts = es.default_options()
    if args.max_phase is not None:
        opts = dataclasses.replace(opts, max_phase_per_step=args.max_phase)
    if getattr(args, 'frame', None):
        opts = dataclasses.replace(opts, frame=args.frame)
    return opts


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command}: 隨機模擬需要 --seed")


def _averaged(args, params: DeviceParams, experiment: Callable[[DeviceParams], object]):
    """有 --shots 時做準靜態雜訊平均，否則直接執行"""
    if not getattr(args, 'shots', None):
        return experiment(params)
    _require_seed(args)
    return noise.shot_average(experiment, params, args.shots, args.seed, draw_outcomes=not args.ensemble)


def _write_result(result, out: str) -> List[str]:
    if isinstance(result, PTMap):
        return [export.write_ptmap(result, out)]
    return [export.write_curve(result, out)]


def _run_experiment(args, params: DeviceParams, out: str) -> List[str]:
    opts = _options(args)
    command = args.command

    if command == 'funnel':
        result = _averaged(args, params, lambda p: es.spin_funnel(p, args.eps, args.b, args.dwell, opts))
    elif command == 'lz':
        grid = _log_range(args.nu) if args.log else args.nu
        b0z = params.b0z if args.b0z is None else args.b0z
        result = _averaged(args, params, lambda p: es.lz_single_passage(p, grid, b0z, opts, args.window))
    elif command == 'lzs':
        result = _averaged(args, params, lambda p: es.lzs_map(p, args.eps, args.tau, args.nu, opts))
    elif command == 'exchange':
        result = _averaged(args, params, lambda p: es.exchange_map(p, args.eps, args.tau, args.b0z, opts))
    elif command == 'esr':
        pulse = es.default_esr_pulse(params)
        if args.duration is not None:
            pulse = dataclasses.replace(pulse, duration=args.duration)
        if args.amplitude is not None:
            pulse = dataclasses.replace(pulse, drive_amp=args.amplitude)
        result = _averaged(args, params, lambda p: es.esr_map(p, args.eps, args.freq, pulse, opts))
    else:
        result = es.gap_curve(params, args.eps, args.which)
    written = _write_result(result, out)
    shape = result.values.shape
    print(f"✅ {command}：{'×'.join(str(n) for n in shape)} → {out}")
    return written


def _run_readout(args, params: DeviceParams, out: str) -> List[str]:
    _require_seed(args)
    settings = current_config()
    shots = args.shots or settings.READOUT_SHOTS
    bins = args.bins or settings.HISTOGRAM_BINS
    report = readout.readout_report(params.sensor, shots, args.seed, bins)

    stem, ext = os.path.splitext(out)
    written = []
    summary = {}
    for mode in ('standard', 'latched'):
        entry = report[mode]
        written.append(export.write_histogram(entry['bin_center'], entry['count'], f"{stem}_{mode}{ext or '.csv'}"))
        for key in ('threshold', 'f_m', 'fidelity_singlet', 'fidelity_triplet', 'visibility',
                    'false_singlet_rate', 'false_triplet_rate'):
            summary[f"{mode}_{key}"] = float(entry[key])
    summary['misidentification_ratio'] = float(report['misidentification_ratio'])
    written.insert(0, export.write_summary(summary, out))
    print(f"✅ readout：可見度 {summary['standard_visibility']:.3f} / {summary['latched_visibility']:.3f}，"
          f"誤判比 {summary['misidentification_ratio']:.1f} → {out}")
    return written


def _run_fit(args, params: DeviceParams, out: str) -> List[str]:
    method = 'bootstrap' if args.bootstrap else 'linear'
    seed = args.seed or 0
    if args.kind == 'lz':
        nu, p_t = export.read_columns(args.input, 2)
        fit = analysis.fit_lz(nu, p_t, method, seed)
    elif args.kind == 'decay':
        tau, p_t = export.read_columns(args.input, 2)
        fit = analysis.fit_decay(tau, p_t, method, seed)
    else:
        try:
            eps, gaps, fields = export.read_columns(args.input, 3)
        except ModelError:
            eps, gaps = export.read_columns(args.input, 2)
            fields = None
        fit = analysis.fit_gap_model(eps, gaps, params, fields, args.which, method, seed)
    written = export.write_fit(fit, out)
    state = '收斂' if fit.converged else '未收斂'
    print(f"✅ fit {args.kind}：{state}，殘差 {fit.residual_norm:.4g} → {out}")
    return written


def _run_evolve(args, params: DeviceParams, out: str) -> List[str]:
    opts = _options(args)
    if args.trajectory:
        opts = dataclasses.replace(opts, record_trajectory=True)
    schedule = documents.parse_schedule(_read_text(args.schedule), params)
    result = ds.evolve(schedule, params, opts)
    written = [export.write_populations(result, BASIS_5, out)]
    p_t = es.blockade_probability(params, result.state, params.protocol.eps_readout)
    print(f"✅ evolve：{len(schedule.segments)} 段，{result.grid.total_steps} 步，P_T = {p_t:.6f} → {out}")
    return written


def _submit(args) -> int:
    from app.tasks import run_command

    if not args.argv or args.argv[0] not in SUBCOMMANDS or args.argv[0] == 'submit':
        raise UsageError(f"submit: 需要要執行的子命令（{', '.join(SUBCOMMANDS[:-1])}）")
    settings = current_config()
    if settings.CELERY_EAGER:
        return int(run_command.apply(args=[list(args.argv)]).get())
    task = run_command.delay(list(args.argv))
    print(f"✅ 已送出任務 {task.id}")
    return EXIT_OK


def execute(args, argv: List[str]) -> int:
    """執行已解析的子命令並寫出執行紀錄"""
    if args.command == 'submit':
        return _submit(args)

    started = time.time()
    params, config_text = _load_params(args)
    out = export.resolve_output(args.out, current_config().OUTPUT_DIR)

    if args.command == 'readout':
        written = _run_readout(args, params, out)
    elif args.command == 'fit':
        written = _run_fit(args, params, out)
    elif args.command == 'evolve':
        written = _run_evolve(args, params, out)
    else:
        written = _run_experiment(args, params, out)

    manifest = RunManifest(
        command=args.command,
        argv=list(argv),
        config_hash=export.config_hash(config_text or documents.dump_device_config(params)),
        master_seed=args.seed,
        versions=export.package_versions(),
        wall_time=time.time() - started,
        outputs=written,
    )
    export.write_manifest(manifest, export.manifest_path(out))
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    """
    命令列入口

    Returns:
        exit code：0 成功、1 用法錯誤、2 模型／解析錯誤、3 數值失敗
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return execute(args, argv)
    except UsageError as e:
        print(f"❌ 用法錯誤：{e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    except (ModelError, OSError) as e:
        print(f"❌ {type(e).__name__}：{e}", file=sys.stderr)
        return EXIT_MODEL
    except NumericError as e:
        print(f"❌ 數值計算失敗：{e}", file=sys.stderr)
        return EXIT_NUMERIC
    except QdsimError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_MODEL
