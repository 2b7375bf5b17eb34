import { inject } from "vitest";

import { ApiClient } from "../src/api";
import { ViewerSession } from "../src/state";

export function serverContext() {
  const info = inject("server");
  return { ...info, api: new ApiClient(info.baseUrl) };
}

/** A "fresh page load": new session, state pulled from the server. */
export async function freshSession(threshold?: number): Promise<{ session: ViewerSession; api: ApiClient; projectId: string; slideId: string }> {
  const { api, projectId, slideId } = serverContext();
  const session = new ViewerSession(api, projectId, slideId);
  await session.load(threshold);
  return { session, api, projectId, slideId };
}
