"""Probability-timeline SVG rendering (no plotting dependency)."""
import csv

TRACE_HEADER = ["frame", "p_t", "sigma_t", "label", "toa"]


class TraceFormatError(ValueError):
    pass


def write_trace_csv(path, trace, label, toa):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, (p, s) in enumerate(zip(trace.p, trace.sigma), 1):
            w.writerow([t, repr(float(p)), repr(float(s)), label, toa])


def read_trace_csv(path):
    """Returns (frames, probabilities, label, toa)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != TRACE_HEADER:
        raise TraceFormatError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    frames, probs, label, toa = [], [], None, None
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(TRACE_HEADER):
            raise TraceFormatError(f"{path}:{lineno}: expected {len(TRACE_HEADER)} fields, got {len(row)}")
        try:
            frames.append(int(row[0]))
            probs.append(float(row[1]))
            float(row[2])
            lab, ta = int(row[3]), int(row[4])
        except ValueError:
            raise TraceFormatError(f"{path}:{lineno}: malformed number") from None
        if label is None:
            label, toa = lab, ta
        elif (lab, ta) != (label, toa):
            raise TraceFormatError(f"{path}:{lineno}: label/toa change within one trace")
    if not frames:
        raise TraceFormatError(f"{path}: no frames")
    return frames, probs, label, toa


def render_svg(frames, probs, threshold=0.5, toa=0, width=640, height=320, title=None):
    left, right, top, bottom = 48, 16, 24, 36
    pw = width - left - right
    ph = height - top - bottom
    f0, f1 = frames[0], frames[-1]
    span = max(f1 - f0, 1)

    def x(f):
        return left + pw * (f - f0) / span

    def y(p):
        return top + ph * (1.0 - p)

    pts = " ".join(f"{x(f):.2f},{y(p):.2f}" for f, p in zip(frames, probs))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line class="axis" x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left - 6}" y="{top + 4}" font-size="10" text-anchor="end">1.0</text>',
        f'<text x="{left - 6}" y="{top + ph + 4}" font-size="10" text-anchor="end">0.0</text>',
        f'<text x="{left + pw / 2:.2f}" y="{height - 8}" font-size="11" text-anchor="middle">frame</text>',
        f'<line class="threshold" x1="{left}" y1="{y(threshold):.2f}" x2="{left + pw}" y2="{y(threshold):.2f}" '
        'stroke="gray" stroke-dasharray="4 3"/>',
    ]
    if toa:
        out.append(
            f'<line class="toa" x1="{x(toa):.2f}" y1="{top}" x2="{x(toa):.2f}" y2="{top + ph}" stroke="red"/>'
        )
    if title:
        out.append(f'<text x="{left}" y="{top - 8}" font-size="12">{_escape(title)}</text>')
    out.append(f'<polyline class="probability" fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def plot_trace(trace_csv, out_svg, threshold=0.5):
    frames, probs, label, toa = read_trace_csv(trace_csv)
    svg = render_svg(frames, probs, threshold=threshold, toa=toa if label == 1 else 0)
    with open(out_svg, "w") as fh:
        fh.write(svg)
    return svg
