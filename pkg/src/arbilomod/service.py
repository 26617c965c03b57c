"""HTTP façade over a session for the interactive companion UI.

Pure delegation: every response is derived from session calls, no numerics
live here.  A single mutation (geometry change or solve) may be in flight;
concurrent requests that would mutate receive 409.
"""

import threading

from fastapi import FastAPI, HTTPException, Request, Response

from .errors import GeometryResolutionError
from .geometry import geometry_from_document
from .session import field_payload


def create_app(session):
    app = FastAPI(title="arbilomod", version="1")
    state = {
        "session": session,
        "lock": threading.Lock(),
        "last_indicators": None,
        "last_mu": None,
    }
    app.state.session = session
    app.state.busy_lock = state["lock"]

    def _busy():
        return HTTPException(status_code=409, detail="a solve or edit is in progress")

    @app.put("/geometry")
    async def put_geometry(request: Request):
        try:
            doc = await request.json()
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"malformed body: {exc}")
        try:
            geom = geometry_from_document(doc)
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid geometry: {exc}")
        if not state["lock"].acquire(blocking=False):
            raise _busy()
        try:
            sess = state["session"]
            try:
                change = sess.apply_change(geom)
            except (GeometryResolutionError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            return {
                "revision": sess.revision,
                "added": [list(r) for r in change.added],
                "removed": [list(r) for r in change.removed],
                "affected_domains": sorted(change.affected_domains),
                "invalidations": {
                    "trainings": sess.stats.last_change.get("trainings", 0),
                    "faces": sess.stats.last_change.get("faces_invalidated", 0),
                    "greedys": sess.stats.last_change.get("greedys", 0),
                    "vertices": sess.stats.last_change.get("vertices", 0),
                },
            }
        finally:
            state["lock"].release()

    @app.post("/solve")
    async def post_solve(request: Request):
        try:
            body = await request.json()
            mu = float(body["mu"])
            tol = float(body.get("tol", 1e-2))
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"malformed body: {exc}")
        if not state["lock"].acquire(blocking=False):
            raise _busy()
        try:
            sess = state["session"]
            try:
                result = sess.solve(mu, tol=tol)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            state["last_indicators"] = result["indicators"].tolist()
            state["last_mu"] = mu
            return {
                "mu": mu,
                "estimate_rel": result["estimate_rel"],
                "estimate_rel_loc": result["estimate_rel_loc"],
                "residual_norm": result["residual_norm"],
                "reduced_dim": result["reduced_dim"],
                "iterations": result["iterations"],
                "reuse_stats": {
                    "trainings_run": sess.stats.trainings_run,
                    "trainings_skipped": sess.stats.trainings_skipped,
                    "greedys_run": sess.stats.greedys_run,
                    "greedys_skipped": sess.stats.greedys_skipped,
                    "last_change": sess.stats.last_change,
                },
            }
        finally:
            state["lock"].release()

    @app.get("/field")
    def get_field(mu: float):
        sess = state["session"]
        if not (sess.geometry.mu_min <= mu <= sess.geometry.mu_max):
            raise HTTPException(status_code=400, detail="mu outside parameter range")
        _, field = sess.model.solve_reduced(mu)
        return Response(content=field_payload(sess.model.mesh, field),
                        media_type="application/octet-stream")

    @app.get("/indicators")
    def get_indicators():
        return {
            "mu": state["last_mu"],
            "indicators": state["last_indicators"] or [],
        }

    @app.get("/status")
    def get_status():
        sess = state["session"]
        dims = {}
        for basis in sess.model.bases.values():
            dims[basis.dim] = dims.get(basis.dim, 0) + 1
        return {
            "revision": sess.revision,
            "reduced_dim": sess.model.reduced_dim(),
            "mesh_n": sess.model.mesh.n,
            "global_dofs": sess.model.mesh.num_nodes,
            "domains_per_side": sess.model.decomp.domains_per_side,
            "basis_size_histogram": {str(k): v for k, v in sorted(dims.items())},
            "cache": {
                "factorizations": len(sess.model.factor_cache),
                "domain_matrices": len(sess.model.domain_cache),
            },
            "stats": sess.stats.to_dict(),
        }

    return app
