#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行前端
子命令: generate / reduce / evaluate / sweep

退出码: 0 成功（收敛）, 2 用法错误, 3 数值失败, 4 达到最大迭代次数未收敛
"""

import argparse
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from core.balanced_truncation import lqo_bt
from core.batch_processing import METHODS, parse_order_range, sweep_orders, wide_error_table
from core.config_manager import ConfigManager
from core.exceptions import BundleFormatError, DimensionError, LqoError
from core.h2_metrics import h2_error, h2_norm_sq, linf_bound_rhs
from core.lqo_system import validate
from core.models import (ADVECTION_SCHEMES, AdvectionDiffusionConfig, build_advection_diffusion,
                         random_stable_lqo)
from core.optimality import fonc_residuals
from core.run_logger import RunLogger
from core.simulation import InputSignal, input_l2_norms, output_error_metrics, simulate
from core.tsia_engine import MONITORS, REASON_CONVERGED, REASON_MAX_ITERS, TsiaConfig, run
from utils.config import config as app_config
from utils.file_io import bundle_metadata, export_table, load_bundle, save_bundle, write_json
from utils.logger import level_from_flags, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_MAX_ITERS = 4

INPUT_KINDS = ("sinusoid", "damped", "step", "exp", "zero")


class UsageError(Exception):
    """命令行参数不满足前置条件"""


def _make_signal(kind, channels):
    if kind == "sinusoid":
        return InputSignal.sinusoid(channels=channels)
    if kind == "damped":
        return InputSignal.damped_poly(channels=channels)
    if kind == "step":
        return InputSignal.step(channels=channels)
    if kind == "exp":
        return InputSignal("exp", channels=channels)
    return InputSignal("zero")


def cmd_generate(args, cfg: ConfigManager) -> int:
    """生成基准模型文件包"""
    if args.model == "advdiff":
        model_cfg = AdvectionDiffusionConfig(n=args.n, alpha=args.alpha, beta=args.beta,
                                             scheme=args.scheme)
        sys, cost_offset = build_advection_diffusion(model_cfg)
        metadata = {"model": "advdiff", "alpha": args.alpha, "beta": args.beta, "scheme": args.scheme,
                    "cost_offset": cost_offset, "signal_channels": [1]}
    else:
        sys = random_stable_lqo(args.n, args.m, args.p, seed=args.seed, spectral_gap=args.gap)
        metadata = {"model": "random", "seed": args.seed, "spectral_gap": args.gap}

    save_bundle(sys, args.out, metadata)
    report = validate(sys)
    verdict = "稳定" if report.stable else "不稳定"
    print(f"n={sys.n} m={sys.m} p={sys.p}  最大特征值实部 {report.abscissa:.6e} ({verdict})")
    return EXIT_OK


def _load_stable(path):
    sys = load_bundle(path)
    report = validate(sys)
    if not report.stable:
        raise LqoError(f"系统不稳定: 最大特征值实部 {report.abscissa:.3e}")
    return sys


def cmd_reduce(args, cfg: ConfigManager) -> int:
    """对单个文件包降阶，写出降阶模型、历史与运行日志"""
    fom = _load_stable(args.bundle)
    if not 1 <= args.r < fom.n:
        raise UsageError(f"要求 1 <= r < n={fom.n}，实际 r={args.r}")
    out = args.out or os.path.join(cfg.get_output_dir(), f"{fom.name or 'system'}_{args.method}_r{args.r}")
    run_logger = RunLogger()
    start = time.perf_counter()

    if args.method == "bt":
        reduction = lqo_bt(fom, args.r)
        rom = reduction.rom
        fom_sq = h2_norm_sq(fom)
        rel = h2_error(fom, rom, fom_sq) / fom_sq if reduction.rom_stable else None
        save_bundle(rom, os.path.join(out, "rom"), {"method": "bt", "r": args.r})
        values = reduction.hankel_like_values
        export_table(pd.DataFrame({"index": np.arange(1, values.size + 1), "value": values}),
                     os.path.join(out, "hankel_values.csv"))
        run_logger.generate_run_log(out, {
            "Method": "bt", "System": fom.name, "n": fom.n, "m": fom.m, "p": fom.p, "r": args.r,
            "Converged": True, "Reason": REASON_CONVERGED, "Relative_H2_error": rel,
            "ROM_stable": reduction.rom_stable, "Elapsed(s)": time.perf_counter() - start,
        }, file_stem="bt")
        print(f"平衡截断 r={args.r}: 相对 H2 误差平方 {rel}")
        return EXIT_OK

    options = cfg.tsia_options()
    if args.tol is not None:
        options["tol"] = args.tol
    if args.monitor is not None:
        options["monitor"] = args.monitor
    if args.max_iters is not None:
        options["max_iters"] = args.max_iters
    tsia_cfg = TsiaConfig(r=args.r, use_fom_norm=not args.no_fom_norm,
                          track_fonc=args.track_fonc, **options)
    result = run(fom, tsia_cfg)

    save_bundle(result.rom, os.path.join(out, "rom"),
                {"method": "tsia", "r": args.r, "converged": result.converged, "reason": result.reason})
    run_logger.write_history(result, os.path.join(out, "history.csv"))
    fonc = None
    if result.history and result.history[-1].rom_stable:
        try:
            fonc = fonc_residuals(fom, result.rom).combined
        except LqoError as e:
            logger.warning(f"FONC 残差不可计算: {e}")
    data = run_logger.tsia_run_data(result, fom, args.r, tsia_cfg.tol, tsia_cfg.monitor,
                                    fonc, time.perf_counter() - start)
    run_logger.generate_run_log(out, data, file_stem="tsia")
    print(f"TSIA r={args.r}: {result.reason}, 迭代 {result.iterations} 次, η={result.final_eta}")

    if result.reason == REASON_CONVERGED:
        return EXIT_OK
    if result.reason == REASON_MAX_ITERS:
        return EXIT_MAX_ITERS
    return EXIT_NUMERICAL


def _series_columns(prefix, y):
    if y.shape[0] == 1:
        return {prefix: y[0]}
    return {f"{prefix}_{k + 1}": y[k] for k in range(y.shape[0])}


def cmd_evaluate(args, cfg: ConfigManager) -> int:
    """评估降阶模型: 相对 H2 误差、FONC 残差、仿真输出与 L∞ 上界校验"""
    fom = _load_stable(args.fom)
    roms = [load_bundle(path) for path in args.roms]
    labels = args.labels
    if labels is None:
        # reduce 写出的文件包带 method 元数据
        labels = [bundle_metadata(path).get("method") or f"rom{i + 1}" for i, path in enumerate(args.roms)]
        if len(set(labels)) != len(labels):
            labels = [f"rom{i + 1}" for i in range(len(roms))]
    if len(labels) != len(roms):
        raise UsageError(f"标签数 {len(labels)} 与降阶模型数 {len(roms)} 不一致")
    for label, rom in zip(labels, roms):
        if rom.m != fom.m or rom.p != fom.p:
            raise DimensionError(f"{label}: 输入/输出个数与全阶模型不一致")

    metadata = bundle_metadata(args.fom)
    channels = args.channels if args.channels is not None else metadata.get("signal_channels")
    signal = _make_signal(args.input, channels)
    dt = args.dt if args.dt is not None else cfg.get_sim_dt()
    horizon = args.horizon

    fom_sq = h2_norm_sq(fom)
    # 全阶与各降阶模型的仿真互不依赖
    with ThreadPoolExecutor(max_workers=app_config.get_threads()) as pool:
        futures = [pool.submit(simulate, sys, signal, horizon, dt) for sys in [fom] + roms]
        full, *reduced_runs = [future.result() for future in futures]
    u_l2, u_kron_l2 = input_l2_norms(signal, fom.m, horizon, dt)

    columns = {"t": full.times}
    columns.update(_series_columns("y", full.y))
    cost_offset = metadata.get("cost_offset")
    if cost_offset is not None and fom.p == 1:
        columns["cost"] = full.cost(cost_offset)[0]

    entries = []
    for label, rom, reduced in zip(labels, roms, reduced_runs):
        err_sq = h2_error(fom, rom, fom_sq)
        fonc = fonc_residuals(fom, rom).combined
        metrics = output_error_metrics(full, reduced)
        bound = linf_bound_rhs(fom, rom, u_l2, u_kron_l2, err_sq)
        bound_ok = metrics.sup_error ** 2 <= bound
        if not bound_ok:
            logger.warning(f"{label}: 输出误差超出 H2 上界 ({metrics.sup_error ** 2:.3e} > {bound:.3e})")
        entries.append({
            "label": label, "r": rom.n,
            "h2_error_sq": err_sq, "rel_h2_error": err_sq / fom_sq,
            "fonc_measure": fonc, "sup_error": metrics.sup_error,
            "bound_rhs": bound, "bound_ok": bool(bound_ok),
        })
        columns.update(_series_columns(f"y_{label}", reduced.y))
        columns[f"relerr_{label}"] = metrics.rel_series

    os.makedirs(args.out, exist_ok=True)
    sim_table = pd.DataFrame(columns)
    export_table(sim_table, os.path.join(args.out, "simulation.csv"))
    report = {
        "fom": fom.name, "n": fom.n, "m": fom.m, "p": fom.p,
        "input": args.input, "horizon": horizon, "dt": dt,
        "fom_h2_sq": fom_sq, "input_l2_sq": u_l2, "input_kron_l2_sq": u_kron_l2,
        "roms": entries,
    }
    write_json(report, os.path.join(args.out, "report.json"))
    for entry in entries:
        print(f"{entry['label']}: 相对 H2 误差平方 {entry['rel_h2_error']:.6e}, "
              f"FONC {entry['fonc_measure']:.3e}, 上界校验 {'通过' if entry['bound_ok'] else '失败'}")
    return EXIT_OK


def cmd_sweep(args, cfg: ConfigManager) -> int:
    """对一组阶数批量降阶并输出误差表"""
    fom = _load_stable(args.bundle)
    try:
        orders = parse_order_range(args.r)
    except ValueError as e:
        raise UsageError(str(e))
    if not all(1 <= r < fom.n for r in orders):
        raise UsageError(f"要求所有阶数满足 1 <= r < n={fom.n}")
    methods = [item.strip() for item in args.methods.split(',') if item.strip()]
    unknown = [item for item in methods if item not in METHODS]
    if unknown:
        raise UsageError(f"未知的降阶方法: {unknown}")

    options = cfg.tsia_options()
    if args.tol is not None:
        options["tol"] = args.tol
    if args.max_iters is not None:
        options["max_iters"] = args.max_iters
    threads = args.threads or app_config.get_threads()
    df = sweep_orders(fom, orders, methods, options, threads)

    out = args.out or os.path.join(cfg.get_output_dir(), f"{fom.name or 'system'}_sweep")
    suffix = ".xlsx" if args.xlsx else ".csv"
    export_table(df, os.path.join(out, "sweep_long" + suffix))
    wide = wide_error_table(df)
    export_table(wide, os.path.join(out, "sweep_errors" + suffix))
    print(wide.to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lqomor", description="LQO 系统 H2 降阶工具")
    parser.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    parser.add_argument("-q", "--quiet", action="store_true", help="只输出警告及以上日志")
    parser.add_argument("--config-dir", default=None, help="配置文件目录（默认 Data/Config）")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="生成基准模型")
    gen.add_argument("model", choices=("advdiff", "random"))
    gen.add_argument("--n", type=int, default=300)
    gen.add_argument("--alpha", type=float, default=0.01)
    gen.add_argument("--beta", type=float, default=1.0)
    gen.add_argument("--scheme", choices=ADVECTION_SCHEMES, default="central", help="对流项差分格式")
    gen.add_argument("--m", type=int, default=1)
    gen.add_argument("--p", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--gap", type=float, default=1.0, help="随机模型的谱间隙")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    red = sub.add_parser("reduce", help="降阶单个模型")
    red.add_argument("bundle")
    red.add_argument("--method", choices=METHODS, default="tsia")
    red.add_argument("--r", type=int, required=True)
    red.add_argument("--tol", type=float, default=None)
    red.add_argument("--monitor", choices=MONITORS, default=None)
    red.add_argument("--max-iters", type=int, default=None)
    red.add_argument("--track-fonc", action="store_true")
    red.add_argument("--no-fom-norm", action="store_true", help="不计算 ||S||^2，仅用 τ 监控")
    red.add_argument("--out", default=None)
    red.set_defaults(func=cmd_reduce)

    ev = sub.add_parser("evaluate", help="评估降阶模型")
    ev.add_argument("fom")
    ev.add_argument("roms", nargs="+")
    ev.add_argument("--labels", nargs="+", default=None)
    ev.add_argument("--input", choices=INPUT_KINDS, default="sinusoid")
    ev.add_argument("--channels", type=int, nargs="+", default=None, help="信号作用的输入通道（0 起）")
    ev.add_argument("--horizon", type=float, default=10.0)
    ev.add_argument("--dt", type=float, default=None)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="对一组阶数批量降阶")
    sw.add_argument("bundle")
    sw.add_argument("--r", required=True, help="阶数表达式，如 2:2:30")
    sw.add_argument("--methods", default="tsia,bt")
    sw.add_argument("--tol", type=float, default=None)
    sw.add_argument("--max-iters", type=int, default=None)
    sw.add_argument("--threads", type=int, default=None)
    sw.add_argument("--xlsx", action="store_true", help="以 XLSX 格式导出")
    sw.add_argument("--out", default=None)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(level_from_flags(args.verbose, args.quiet))
    cfg = ConfigManager(args.config_dir)
    try:
        return args.func(args, cfg)
    except (UsageError, DimensionError, BundleFormatError) as e:
        logger.error(f"用法错误: {e}")
        return EXIT_USAGE
    except LqoError as e:
        logger.error(f"数值失败: {e}")
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"参数错误: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"文件读写失败: {e}")
        return EXIT_USAGE
