"""Hot loops of the ring reservoir.

One kernel covers every drive mode: ``n_teacher`` teacher-forced steps, then
optional closed-loop steps where the readout of the acquired state is fed
back as the next input. Two implementations share the same contract:

* ``simulate_numba``: explicit loops compiled with ``numba.njit``.
* ``simulate_numpy``: one vectorised numpy update per time step.

``simulate`` dispatches to the backend picked in :mod:`rcfeedback._backend`.
The two paths agree to rounding (numba and numpy may differ in the last ulp
of ``sin``), each is bitwise deterministic on its own.

Per-step effect order (each stage skipped when disabled)::

    I  <- dac(I) + drive_noise[n]
    fb <- highpass(alpha * previous neighbour)       # time-multiplexed stream
    x  <- sin(fb + beta * mask * I)                  # optical loop state
    r  <- gain * adc(x + acq_noise[n])               # acquired state
    y  <- w . r                                      # closed-loop phase only
"""
import numpy as np

from rcfeedback import _backend

__all__ = ["simulate", "simulate_numpy", "simulate_numba", "quantize_scalar"]


def _quantize_py(v, bits, lo, hi):
    step = (hi - lo) / 2.0**bits
    k = np.floor((v - lo) / step + 0.5)
    top = 2.0**bits - 1.0
    if k < 0.0:
        k = 0.0
    elif k > top:
        k = top
    return lo + k * step


if _backend.HAVE_NUMBA:
    from numba import njit

    quantize_scalar = njit(cache=True)(_quantize_py)
else:  # pragma: no cover
    quantize_scalar = _quantize_py


def _simulate_loops(alpha, beta, mask, teacher, n_auto, w,
                    acq, drv, adc_bits, dac_bits, gain, hp_a, blowup,
                    x, x_last, hp_u, hp_y):
    n = mask.shape[0]
    n_teacher = teacher.shape[0]
    n_steps = n_teacher + n_auto - 1 if n_auto > 0 else n_teacher
    use_acq = acq.shape[0] > 0
    use_drv = drv.shape[0] > 0
    use_hp = hp_a > 0.0

    rec = np.empty((n_steps, n))
    applied = np.empty(n_steps)
    outputs = np.full(n_auto, np.nan)
    new = np.empty(n)
    r = np.empty(n)
    done = 0
    y = 0.0

    for t in range(n_steps):
        if t < n_teacher:
            u = teacher[t]
        else:
            u = y
        if dac_bits > 0:
            u = quantize_scalar(u, dac_bits, -1.0, 1.0)
        applied[t] = u
        if use_drv:
            u = u + drv[t]

        for i in range(n):
            if i == 0:
                fb = alpha * x_last
            else:
                fb = alpha * x[i - 1]
            if use_hp:
                hp_y = hp_a * (hp_y + (fb - hp_u))
                hp_u = fb
                fb = hp_y
            new[i] = np.sin(fb + beta * mask[i] * u)
        x_last = x[n - 1]
        for i in range(n):
            x[i] = new[i]

        for i in range(n):
            v = x[i]
            if use_acq:
                v = v + acq[t, i]
            if adc_bits > 0:
                v = quantize_scalar(v, adc_bits, -1.0, 1.0)
            if gain != 1.0:
                v = v * gain
            r[i] = v
            rec[t, i] = v
        done = t + 1

        if n_auto > 0 and t >= n_teacher - 1:
            y = 0.0
            for i in range(n):
                y += w[i] * r[i]
            outputs[t - n_teacher + 1] = y
            if not abs(y) <= blowup:
                break

    return rec[:done], applied[:done], outputs, done, x, x_last, hp_u, hp_y


def simulate_numpy(alpha, beta, mask, teacher, n_auto, w,
                   acq, drv, adc_bits, dac_bits, gain, hp_a, blowup,
                   x, x_last, hp_u, hp_y):
    n = mask.shape[0]
    n_teacher = teacher.shape[0]
    n_steps = n_teacher + n_auto - 1 if n_auto > 0 else n_teacher
    use_acq = acq.shape[0] > 0
    use_drv = drv.shape[0] > 0
    use_hp = hp_a > 0.0
    bmask = beta * mask
    adc_step = 2.0 / 2.0**adc_bits if adc_bits > 0 else 0.0
    adc_top = 2.0**adc_bits - 1.0

    rec = np.empty((n_steps, n))
    applied = np.empty(n_steps)
    outputs = np.full(n_auto, np.nan)
    x = x.copy()
    fb = np.empty(n)
    done = 0
    y = 0.0

    for t in range(n_steps):
        u = teacher[t] if t < n_teacher else y
        if dac_bits > 0:
            u = _quantize_py(u, dac_bits, -1.0, 1.0)
        applied[t] = u
        if use_drv:
            u = u + drv[t]

        fb[0] = alpha * x_last
        fb[1:] = alpha * x[:-1]
        if use_hp:
            fb, hp_u, hp_y = _highpass_block(fb, hp_a, hp_u, hp_y)
        x_last = x[n - 1]
        x = np.sin(fb + bmask * u)

        r = x + acq[t] if use_acq else x.copy()
        if adc_bits > 0:
            k = np.clip(np.floor((r + 1.0) / adc_step + 0.5), 0.0, adc_top)
            r = -1.0 + k * adc_step
        if gain != 1.0:
            r = r * gain
        rec[t] = r
        done = t + 1

        if n_auto > 0 and t >= n_teacher - 1:
            y = float(w @ r)
            outputs[t - n_teacher + 1] = y
            if not abs(y) <= blowup:
                break

    return rec[:done], applied[:done], outputs, done, x, x_last, hp_u, hp_y


def _highpass_block(u, a, u_prev, y_prev):
    # y_k = a * (y_{k-1} + u_k - u_{k-1}), sequential over the block
    from scipy.signal import lfilter

    zi = np.array([a * (y_prev - u_prev)])
    out, _ = lfilter([a, -a], [1.0, -a], u, zi=zi)
    return out, float(u[-1]), float(out[-1])


if _backend.HAVE_NUMBA:
    simulate_numba = njit(cache=True)(_simulate_loops)
else:  # pragma: no cover
    simulate_numba = None


def simulate(*args):
    if _backend.numba_enabled():
        return simulate_numba(*args)
    return simulate_numpy(*args)
