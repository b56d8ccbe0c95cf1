"""Pure-Python sum-product flooding; same contract as the compiled ``_bp_ext``."""


def bp_flood(n_nodes, src, dst, tables, unary, in_ptr, in_msg, max_iter, tol, damping):
    import numpy as np

    src = [int(x) for x in src]
    dst = [int(x) for x in dst]
    tab = [[[float(tables[d][a][b]) for b in (0, 1)] for a in (0, 1)] for d in range(len(src))]
    un = [(float(unary[i][0]), float(unary[i][1])) for i in range(n_nodes)]
    incoming = [[int(in_msg[k]) for k in range(in_ptr[i], in_ptr[i + 1])] for i in range(n_nodes)]
    n_msg = len(src)
    msgs = [[0.5, 0.5] for _ in range(n_msg)]
    converged = False
    iterations = 0

    for it in range(max_iter):
        new = []
        for d in range(n_msg):
            s = src[d]
            rev = d ^ 1
            p0, p1 = un[s]
            for other in incoming[s]:
                if other != rev:
                    p0 *= msgs[other][0]
                    p1 *= msgs[other][1]
            t = tab[d]
            q0 = p0 * t[0][0] + p1 * t[1][0]
            q1 = p0 * t[0][1] + p1 * t[1][1]
            z = q0 + q1
            new.append([q0 / z, q1 / z] if z > 0 else [0.5, 0.5])
        change = 0.0
        for d in range(n_msg):
            old = msgs[d]
            upd = [damping * old[k] + (1.0 - damping) * new[d][k] for k in (0, 1)]
            change = max(change, abs(upd[0] - old[0]), abs(upd[1] - old[1]))
            msgs[d] = upd
        iterations = it + 1
        if change < tol:
            converged = True
            break

    beliefs = np.empty((n_nodes, 2))
    for s in range(n_nodes):
        p0, p1 = un[s]
        for other in incoming[s]:
            p0 *= msgs[other][0]
            p1 *= msgs[other][1]
        z = p0 + p1
        beliefs[s] = (p0 / z, p1 / z) if z > 0 else (0.5, 0.5)
    return beliefs, converged, iterations
