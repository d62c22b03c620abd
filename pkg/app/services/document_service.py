# document_service.py
# 裝置設定檔與脈衝序列檔的解析／輸出（TOML，物理量以 "數值 單位" 字串表示）

import logging
import re
import sys
from typing import Any, Dict, List, Optional, Tuple

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from app import current_config
from app.errors import ConfigParseError, ModelError, ScheduleError
from app.models import DeviceParams, PulseSchedule, ProtocolParams, SensorParams, Segment, SEGMENT_KINDS
from app.services import experiment_service as es
from app.utils.units import parse_quantity, format_quantity

logger = logging.getLogger(__name__)


# ==================== 欄位對照表 ====================

# section → {key: (物理量種類, 欄位單位)}
DEVICE_FIELDS = {
    'hamiltonian': {
        'tc0': ('frequency', 'GHz'),
        'tc_decay': ('energy', 'µeV'),
        'delta11': ('frequency', 'MHz'),
        'e_charging': ('energy', 'meV'),
        'valley_frac': ('dimensionless', ''),
        'eps_offset': ('energy', 'µeV'),
    },
    'field': {
        'g1': ('dimensionless', ''),
        'g2': ('dimensionless', ''),
        'b0z': ('field', 'mT'),
        'b_offset': ('field', 'mT'),
    },
    'noise': {
        'sigma_eps': ('energy', 'µeV'),
        'sigma_delta': ('frequency', 'kHz'),
    },
}

SENSOR_FIELDS = {
    'standard_mu_singlet': ('current', 'pA'),
    'standard_mu_triplet': ('current', 'pA'),
    'latched_mu_singlet': ('current', 'pA'),
    'latched_mu_triplet': ('current', 'pA'),
    'sigma_current': ('current', 'pA'),
    'latch_success': ('dimensionless', ''),
    'prep_error': ('dimensionless', ''),
}

PROTOCOL_FIELDS = {
    'eps_init': ('energy', 'µeV'),
    'eps_readout': ('energy', 'µeV'),
    'eps_prep': ('energy', 'µeV'),
    'prep_ramp': ('time', 'ns'),
    'crossing_ramp': ('time', 'ns'),
    'crossing_window': ('energy', 'µeV'),
    'plunge': ('time', 'ns'),
    'funnel_ramp': ('time', 'ns'),
    'lz_window': ('dimensionless', ''),
    'lz_return': ('time', 'ns'),
    'esr_duration': ('time', 'ns'),
    'esr_amplitude': ('frequency', 'MHz'),
}

SECTIONS = dict(DEVICE_FIELDS, sensor=SENSOR_FIELDS, protocol=PROTOCOL_FIELDS)

# 必填的最小設定
REQUIRED_KEYS = (('hamiltonian', 'tc0'), ('field', 'g1'), ('field', 'g2'), ('field', 'b0z'))

# 預設序列的參數：名稱 → {key: (種類, 單位, 是否必填)}
PRESETS = {
    'funnel': {'eps': ('energy', 'µeV', True), 'dwell': ('time', 'ns', True)},
    'lz': {'velocity': ('velocity', 'Hz/s', True), 'window': ('dimensionless', '', False)},
    'lzs': {'eps': ('energy', 'µeV', True), 'tau': ('time', 'ns', True),
            'velocity': ('velocity', 'Hz/s', False), 'window': ('dimensionless', '', False)},
    'exchange': {'depth': ('energy', 'µeV', True), 'dwell': ('time', 'ns', True)},
    'esr': {'eps': ('energy', 'µeV', True), 'freq': ('frequency', 'GHz', True),
            'duration': ('time', 'ns', False), 'amplitude': ('frequency', 'MHz', False),
            'phase': ('angle', 'rad', False)},
}

SEGMENT_FIELDS = {
    'eps_start': ('energy', 'µeV'),
    'eps_end': ('energy', 'µeV'),
    'eps': ('energy', 'µeV'),
    'duration': ('time', 'ns'),
    'drive_freq': ('frequency', 'GHz'),
    'drive_amp': ('frequency', 'MHz'),
    'drive_phase': ('angle', 'rad'),
}

_TOML_LOCATION_RE = re.compile(r'line (\d+), column (\d+)')


# ==================== 共用工具 ====================

def _load_toml(text: str) -> Dict[str, Any]:
    """解析 TOML，錯誤時轉成帶行列位置的 ConfigParseError"""
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, 'lineno', None)
        column = getattr(e, 'colno', None)
        if line is None:
            match = _TOML_LOCATION_RE.search(str(e))
            if match:
                line, column = int(match.group(1)), int(match.group(2))
        raise ConfigParseError(f"TOML 語法錯誤：{str(e).split(' (at ')[0]}", line, column) from e


def _locate(text: str, section: Optional[str], key: str) -> Tuple[Optional[int], Optional[int]]:
    """找出 section 內 key 的行號與欄號（1 起算）"""
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        header = re.match(r'^\[+\s*([^\]]+?)\s*\]+', stripped)
        if header:
            current = header.group(1)
            if section is None and current == key:
                return number, raw.index(key) + 1
            continue
        if current == section and re.match(rf'^{re.escape(key)}\s*=', stripped):
            return number, raw.index(key) + 1
    return None, None


def _convert(text: str, raw, kind: str, unit: str, section: Optional[str], key: str) -> float:
    """把單一物理量換成欄位單位，錯誤附上位置"""
    try:
        return parse_quantity(raw, kind, key, unit)
    except ModelError as e:
        line, column = _locate(text, section, key)
        raise ConfigParseError(str(e), line, column) from e


# ==================== 裝置設定 ====================

def parse_device_config(text: str, protocol_defaults: Dict[str, float] = None) -> DeviceParams:
    """
    解析裝置設定檔

    格式為 TOML，分成 [hamiltonian] [field] [noise] [sensor] [protocol] 五個 section，
    每個物理量都必須附上單位，例如 tc0 = "1.864 GHz"；無因次量可直接寫數字

    Args:
        text: 設定檔內容
        protocol_defaults: [protocol] 缺少的鍵所用的預設值（預設取自 Config.PROTOCOL_DEFAULTS）

    Returns:
        DeviceParams

    Raises:
        ConfigParseError: 語法錯誤、未知的 section／鍵、單位不符（附行列位置）
        ModelError: 參數不變量違反（訊息指名欄位）
    """
    document = _load_toml(text)

    for section, values in document.items():
        if section not in SECTIONS:
            line, column = _locate(text, None, section)
            raise ConfigParseError(f"未知的 section：[{section}]（可用：{', '.join(SECTIONS)}）", line, column)
        if not isinstance(values, dict):
            line, column = _locate(text, None, section)
            raise ConfigParseError(f"{section} 必須是 table", line, column)
        for key in values:
            if key not in SECTIONS[section]:
                line, column = _locate(text, section, key)
                raise ConfigParseError(f"[{section}] 中未知的鍵：{key}", line, column)

    for section, key in REQUIRED_KEYS:
        if key not in document.get(section, {}):
            raise ConfigParseError(f"缺少必填的鍵：[{section}] {key}")

    device = {}
    for section, fields in DEVICE_FIELDS.items():
        for key, raw in document.get(section, {}).items():
            kind, unit = fields[key]
            device[key] = _convert(text, raw, kind, unit, section, key)

    sensor = {key: _convert(text, raw, *SENSOR_FIELDS[key], 'sensor', key)
              for key, raw in document.get('sensor', {}).items()}

    if protocol_defaults is None:
        protocol_defaults = current_config().PROTOCOL_DEFAULTS
    protocol = dict(protocol_defaults)
    protocol.update({key: _convert(text, raw, *PROTOCOL_FIELDS[key], 'protocol', key)
                     for key, raw in document.get('protocol', {}).items()})

    params = DeviceParams(sensor=SensorParams(**sensor), protocol=ProtocolParams(**protocol), **device)
    logger.debug(f"裝置設定：tc0 = {params.tc0} GHz，g = ({params.g1}, {params.g2})，B0z = {params.b0z} mT")
    return params


def _quantity(value: float, kind: str, unit: str):
    if kind == 'dimensionless':
        return float(value)
    return format_quantity(value, kind, unit)


def device_config_dict(params: DeviceParams) -> Dict[str, Dict[str, Any]]:
    """DeviceParams → 設定檔結構（以各欄位的儲存單位輸出）"""
    document = {}
    for section, fields in DEVICE_FIELDS.items():
        document[section] = {key: _quantity(getattr(params, key), kind, unit)
                             for key, (kind, unit) in fields.items()}
    document['sensor'] = {key: _quantity(getattr(params.sensor, key), kind, unit)
                          for key, (kind, unit) in SENSOR_FIELDS.items()}
    document['protocol'] = {key: _quantity(getattr(params.protocol, key), kind, unit)
                            for key, (kind, unit) in PROTOCOL_FIELDS.items()}
    return document


def dump_device_config(params: DeviceParams) -> str:
    """輸出完整設定檔；parse_device_config(dump_device_config(p)) == p"""
    return tomli_w.dumps(device_config_dict(params))


# ==================== 脈衝序列 ====================

def parse_preset(line: str, params: DeviceParams) -> PulseSchedule:
    """
    展開預設序列，例如 "exchange depth=30µeV dwell=100ns"

    Raises:
        ScheduleError: 未知的預設名稱、未知或缺少的參數
    """
    tokens = line.split()
    if not tokens:
        raise ScheduleError("preset 不可為空")
    name = tokens[0]
    if name not in PRESETS:
        raise ScheduleError(f"未知的 preset：{name}（可用：{', '.join(PRESETS)}）")

    accepted = PRESETS[name]
    values = {}
    for token in tokens[1:]:
        key, sep, raw = token.partition('=')
        if not sep or key not in accepted:
            raise ScheduleError(f"preset {name} 不接受參數：{token}")
        kind, unit, _ = accepted[key]
        try:
            values[key] = parse_quantity(raw if kind != 'dimensionless' else float(raw), kind, key, unit)
        except ValueError as e:
            raise ScheduleError(str(e)) from e
    missing = [key for key, (_, _, required) in accepted.items() if required and key not in values]
    if missing:
        raise ScheduleError(f"preset {name} 缺少參數：{', '.join(missing)}")

    if name == 'funnel':
        return es.funnel_schedule(params, values['eps'], values['dwell'])
    if name == 'lz':
        return es.lz_schedule(params, values['velocity'], values.get('window'))
    if name == 'lzs':
        return es.lzs_schedule(params, values['eps'], values['tau'], values.get('velocity'), values.get('window'))
    if name == 'exchange':
        return es.exchange_schedule(params, values['depth'], values['dwell'])
    protocol = params.protocol
    pulse = Segment('drive', values['eps'], values['eps'], values.get('duration', protocol.esr_duration),
                    drive_freq=values['freq'], drive_amp=values.get('amplitude', protocol.esr_amplitude),
                    drive_phase=values.get('phase', 0.0))
    return es.esr_schedule(params, values['eps'], pulse)


def _parse_segment(index: int, table: Dict[str, Any]) -> Segment:
    kind = table.get('kind')
    if kind not in SEGMENT_KINDS:
        raise ScheduleError(f"kind 必須為 {', '.join(SEGMENT_KINDS)} 之一（目前 {kind!r}）", segment_index=index)
    values = {}
    for key, raw in table.items():
        if key == 'kind':
            continue
        if key not in SEGMENT_FIELDS:
            raise ScheduleError(f"未知的鍵：{key}", segment_index=index)
        kind_of, unit = SEGMENT_FIELDS[key]
        try:
            values[key] = parse_quantity(raw, kind_of, key, unit)
        except ModelError as e:
            raise ScheduleError(str(e), segment_index=index) from e
    if 'eps' in values:
        values.setdefault('eps_start', values['eps'])
        values.setdefault('eps_end', values.pop('eps'))
    if 'eps_start' not in values or 'duration' not in values:
        raise ScheduleError("需要 eps_start（或 eps）與 duration", segment_index=index)
    values.setdefault('eps_end', values['eps_start'])
    try:
        return Segment(kind=kind, **values)
    except ScheduleError as e:
        raise ScheduleError(str(e), segment_index=index) from e


def _parse_initial(raw) -> Any:
    if isinstance(raw, str):
        return raw
    amplitudes = []
    for item in raw:
        if isinstance(item, (list, tuple)) and len(item) == 2:
            amplitudes.append(complex(float(item[0]), float(item[1])))
        else:
            amplitudes.append(complex(float(item)))
    return tuple(amplitudes)


def parse_schedule(text: str, params: DeviceParams = None) -> PulseSchedule:
    """
    解析脈衝序列檔

    可以是單行 preset（"exchange depth=30µeV dwell=100ns"），或 TOML：
    `preset = "..."`，或 [[segment]] table 陣列加上選填的 initial
    （"ground_02S" 或 5 個振幅，複數寫成 [實部, 虛部]）

    Raises:
        ScheduleError: ε 不連續（附 segment 索引）、duration 非正、未知 preset
        ConfigParseError: TOML 語法錯誤
    """
    params = params or DeviceParams()
    stripped = text.strip()
    first = stripped.split(None, 1)[0] if stripped else ''
    if first in PRESETS:
        return parse_preset(stripped, params)

    document = _load_toml(text)
    unknown = set(document) - {'preset', 'segment', 'initial'}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigParseError(f"脈衝序列中未知的鍵：{key}", *_locate_top(text, key))

    if 'preset' in document:
        if 'segment' in document:
            raise ScheduleError("preset 與 [[segment]] 不可同時使用")
        return parse_preset(str(document['preset']), params)

    tables = document.get('segment')
    if not tables:
        raise ScheduleError("脈衝序列至少需要一個 [[segment]]")
    segments = tuple(_parse_segment(index, table) for index, table in enumerate(tables))
    try:
        initial = _parse_initial(document.get('initial', 'ground_02S'))
    except (TypeError, ValueError) as e:
        raise ScheduleError(f"initial 無法解析：{e}") from e
    return PulseSchedule(segments=segments, initial=initial)


def _locate_top(text: str, key: str) -> Tuple[Optional[int], Optional[int]]:
    """頂層鍵或 table 標頭的位置"""
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if re.match(rf'^\[*\s*{re.escape(key)}\s*(\]|=)', stripped):
            return number, raw.index(key) + 1
    return None, None


def schedule_dict(schedule: PulseSchedule) -> Dict[str, Any]:
    """PulseSchedule → 序列檔結構"""
    segments: List[Dict[str, Any]] = []
    for seg in schedule.segments:
        table = {
            'kind': seg.kind,
            'eps_start': format_quantity(seg.eps_start, 'energy'),
            'eps_end': format_quantity(seg.eps_end, 'energy'),
            'duration': format_quantity(seg.duration, 'time'),
        }
        if seg.kind == 'drive':
            table['drive_freq'] = format_quantity(seg.drive_freq, 'frequency')
            table['drive_amp'] = format_quantity(seg.drive_amp, 'frequency', 'MHz')
            table['drive_phase'] = format_quantity(seg.drive_phase, 'angle')
        segments.append(table)
    document: Dict[str, Any] = {}
    if isinstance(schedule.initial, str):
        document['initial'] = schedule.initial
    else:
        document['initial'] = [[a.real, a.imag] for a in schedule.initial]
    document['segment'] = segments
    return document


def dump_schedule(schedule: PulseSchedule) -> str:
    return tomli_w.dumps(schedule_dict(schedule))
