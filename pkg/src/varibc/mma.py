"""Method of Moving Asymptotes, one iteration at a time.

Standard MMA (Svanberg 1987; September-2007 reference algorithm) for

    minimize f0(x) + a0 z + sum(c_i y_i + 0.5 d_i y_i^2)
    s.t.     f_i(x) - a_i z - y_i <= 0,   xmin <= x <= xmax,  y >= 0, z >= 0

with the default asymptote settings: initialization at 0.5 of the variable
range, adaptation factors 0.7 (oscillation) and 1.2 (monotone progress). The
subproblem is solved by the usual primal-dual Newton interior-point method.
Move limits are accepted per variable.
"""

from __future__ import annotations

import numpy as np

ASYINIT = 0.5
ASYINCR = 1.2
ASYDECR = 0.7
ALBEFA = 0.1
RAA0 = 1e-5
EPSIMIN = 1e-7


class SubproblemError(RuntimeError):
    """The dual subproblem solve failed to produce finite iterates."""


def mmasub(iter_count, x, xmin, xmax, xold1, xold2, f0val, df0dx, fval, dfdx,
           low, upp, move, a0=1.0, a=None, c=None, d=None):
    """One MMA iteration.

    dfdx has shape (m, n); move is a per-variable cap on |x_new - x| in the
    same units as x. Returns (x_new, y, z, lam, low, upp).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    m = len(fval)
    move = np.broadcast_to(np.asarray(move, dtype=float), (n,))
    a = np.zeros(m) if a is None else np.asarray(a, float)
    c = np.full(m, 1000.0) if c is None else np.asarray(c, float)
    d = np.ones(m) if d is None else np.asarray(d, float)

    xrange = np.maximum(xmax - xmin, 1e-5)
    if iter_count <= 2:
        low = x - ASYINIT * xrange
        upp = x + ASYINIT * xrange
    else:
        zzz = (x - xold1) * (xold1 - xold2)
        factor = np.ones(n)
        factor[zzz > 0] = ASYINCR
        factor[zzz < 0] = ASYDECR
        low = x - factor * (xold1 - low)
        upp = x + factor * (upp - xold1)
        # near clamp at 1e-4 of the range: lets oscillating variables damp
        # out instead of limit-cycling at the clamp distance
        low = np.clip(low, x - 10.0 * xrange, x - 1e-4 * xrange)
        upp = np.clip(upp, x + 1e-4 * xrange, x + 10.0 * xrange)

    alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - move, xmin])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + move, xmax])

    ux1 = upp - x
    xl1 = x - low
    ux2 = ux1 * ux1
    xl2 = xl1 * xl1
    xmami_inv = 1.0 / xrange

    df0p = np.maximum(df0dx, 0.0)
    df0m = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (df0p + df0m) + RAA0 * xmami_inv
    p0 = (df0p + pq0) * ux2
    q0 = (df0m + pq0) * xl2

    dfp = np.maximum(dfdx, 0.0)
    dfm = np.maximum(-dfdx, 0.0)
    pq = 0.001 * (dfp + dfm) + RAA0 * xmami_inv[None, :]
    P = (dfp + pq) * ux2[None, :]
    Q = (dfm + pq) * xl2[None, :]
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

    x_new, y, z, lam = subsolv(m, n, low, upp, alfa, beta, p0, q0, P, Q,
                               a0, a, b, c, d)
    return x_new, y, z, lam, low, upp


def subsolv(m, n, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d):
    """Primal-dual Newton interior-point solve of the MMA subproblem."""
    x = 0.5 * (alfa + beta)
    y = np.ones(m)
    z = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0 / np.maximum(x - alfa, 1e-12), 1.0)
    eta = np.maximum(1.0 / np.maximum(beta - x, 1e-12), 1.0)
    mu = np.maximum(1.0, 0.5 * c)
    zet = 1.0
    s = np.ones(m)
    epsi = 1.0

    def residuals(epsi_):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        rex = plam / ux1**2 - qlam / xl1**2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * z - y + s - b
        rexsi = xsi * (x - alfa) - epsi_
        reeta = eta * (beta - x) - epsi_
        remu = mu * y - epsi_
        rezet = zet * z - epsi_
        res = lam * s - epsi_
        parts = [rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res]
        r = np.concatenate([np.atleast_1d(p) for p in parts])
        return r, float(np.linalg.norm(r)), float(np.abs(r).max())

    while epsi > EPSIMIN:
        _, residunorm, residumax = residuals(epsi)
        for _ in range(200):
            if residumax <= 0.9 * epsi:
                break
            ux1 = upp - x
            xl1 = x - low
            ux2 = ux1 * ux1
            xl2 = xl1 * xl1
            ux3 = ux1 * ux2
            xl3 = xl1 * xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
            GG = P / ux2[None, :] - Q / xl2[None, :]
            delx = (plam / ux2 - qlam / xl2 - epsi / (x - alfa)
                    + epsi / (beta - x))
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2.0 * (plam / ux3 + qlam / xl3)
            diagx = diagx + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglam = s / lam
            diaglamyi = diaglam + 1.0 / diagy

            # m is small here: solve the (m+1) dense system
            blam = dellam + dely / diagy - GG @ (delx / diagx)
            Alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
            AA = np.empty((m + 1, m + 1))
            AA[:m, :m] = Alam
            AA[:m, m] = a
            AA[m, :m] = a
            AA[m, m] = -zet / z
            bb = np.concatenate([blam, [delz]])
            try:
                solut = np.linalg.solve(AA, bb)
            except np.linalg.LinAlgError as err:
                raise SubproblemError(str(err)) from None
            dlam = solut[:m]
            dz = solut[m]
            dx = -delx / diagx - (GG.T @ dlam) / diagx
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet],
                                  ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - alfa))
            stmbeta = np.max(1.01 * dx / (beta - x))
            steg = 1.0 / max(stmxx, stmalfa, stmbeta, 1.0)

            xold, yold, zold = x, y, z
            lamold, xsiold, etaold = lam, xsi, eta
            muold, zetold, sold = mu, zet, s
            resinew = 2.0 * residunorm
            for _ in range(50):
                if resinew <= residunorm:
                    break
                x = xold + steg * dx
                y = yold + steg * dy
                z = zold + steg * dz
                lam = lamold + steg * dlam
                xsi = xsiold + steg * dxsi
                eta = etaold + steg * deta
                mu = muold + steg * dmu
                zet = zetold + steg * dzet
                s = sold + steg * ds
                _, resinew, residumax = residuals(epsi)
                steg *= 0.5
            residunorm = resinew
            if not np.isfinite(residunorm):
                raise SubproblemError("non-finite subproblem residual")
        epsi *= 0.1
    return x, y, z, lam
